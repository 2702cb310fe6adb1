//! Piecewise-linear functions over strictly increasing knots.

use crate::error::{Result, VrgError};

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(VrgError::Format(format!(
                "knot abscissae ({}) and ordinates ({}) differ in length",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(VrgError::Format("at least two knots are required".into()));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(VrgError::NonFinite("knot values must be finite".into()));
        }
        if let Some(w) = xs.windows(2).find(|w| w[0] >= w[1]) {
            return Err(VrgError::Format(format!(
                "knots must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn span(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.span();
        x >= lo && x <= hi
    }

    /// Index `i` of the segment `[xs[i], xs[i+1])` holding `x`, for `x` in
    /// `[xs[0], xs[n-1])`.
    fn segment(&self, x: f64) -> usize {
        // partition_point gives the first knot strictly greater than x.
        self.xs.partition_point(|&k| k <= x) - 1
    }

    /// Linear interpolation, constant extrapolation beyond the end knots.
    pub fn eval_clamped(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        if x == x0 {
            return y0;
        }
        let t = (x - x0) / (x1 - x0);
        y0 + t * (y1 - y0)
    }

    /// Right derivative of [`eval_clamped`](Self::eval_clamped): the slope of
    /// the segment starting at or after `x`, and zero in the clamped regions
    /// (including exactly at the last knot).
    pub fn right_slope(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x >= self.xs[n - 1] {
            return 0.0;
        }
        let i = self.segment(x);
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }
}
