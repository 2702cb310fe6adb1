//! Training-time noise schedule, the forward noising map and the per-step
//! error weight.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VrgError};

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Persisted form of a [`NoiseSchedule`]. The cumulative products are
/// recomputed on load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    #[serde(rename = "T")]
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
        }
    }
}

/// Dense linear-β schedule. Timesteps are 1-based: `alpha_bar(1)` is the
/// least noisy level, `alpha_bar(T)` the noisiest.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    params: ScheduleParams,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 1 {
            return Err(VrgError::InvalidSchedule("T must be at least 1".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(VrgError::InvalidSchedule(format!(
                "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let beta: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let alpha_bar: Vec<f64> = beta
            .iter()
            .scan(1.0, |acc, b| {
                *acc *= 1.0 - b;
                Some(*acc)
            })
            .collect();
        if alpha_bar.iter().any(|&a| a <= 0.0) {
            return Err(VrgError::InvalidSchedule(
                "cumulative product underflows to zero".into(),
            ));
        }
        Ok(Self {
            params: ScheduleParams {
                steps,
                beta_start,
                beta_end,
            },
            beta,
            alpha_bar,
        })
    }

    pub fn from_params(p: ScheduleParams) -> Result<Self> {
        Self::linear(p.steps, p.beta_start, p.beta_end)
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    pub fn steps(&self) -> usize {
        self.params.steps
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    /// ᾱ for t = 1..=T, in increasing t (decreasing ᾱ).
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// ᾱ at integer timestep `t` in `1..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    /// ᾱ at a fractional timestep in `[1, T]`, interpolating log ᾱ linearly
    /// between neighbouring integer steps.
    pub fn alpha_bar_at(&self, t: f64) -> f64 {
        let last = self.steps() as f64;
        let t = t.clamp(1.0, last);
        let lo = t.floor();
        let frac = t - lo;
        let i = lo as usize;
        if frac == 0.0 || i == self.steps() {
            return self.alpha_bar(i);
        }
        let (a, b) = (self.alpha_bar(i).ln(), self.alpha_bar(i + 1).ln());
        (a + frac * (b - a)).exp()
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::from_params(ScheduleParams::default()).expect("default schedule is valid")
    }
}

/// `½·ln(ᾱ/(1−ᾱ))`.
pub fn half_log_snr(alpha_bar: f64) -> f64 {
    0.5 * (alpha_bar.ln() - (-alpha_bar).ln_1p())
}

/// Inverse of [`half_log_snr`].
pub fn alpha_bar_from_half_log_snr(lambda: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * lambda).exp())
}

/// Forward noising: `√ᾱ·x0 + √(1−ᾱ)·noise`.
pub fn diffuse(x0: &[f64], alpha_bar: f64, noise: &[f64]) -> Result<Vec<f64>> {
    if x0.len() != noise.len() {
        return Err(VrgError::DimensionMismatch {
            expected: x0.len(),
            got: noise.len(),
        });
    }
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(VrgError::Domain(format!(
            "alpha_bar must lie in [0, 1], got {alpha_bar}"
        )));
    }
    let (s, n) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    Ok(x0.iter().zip(noise).map(|(x, e)| s * x + n * e).collect())
}

/// Weight of a step's prediction-error variance in the final sample
/// variance: `(√(1−ᾱ) − √(α−ᾱ))² / ᾱ`.
///
/// Requires `0 < ᾱ ≤ α ≤ 1`.
pub fn error_weight(alpha_bar: f64, alpha: f64) -> Result<f64> {
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(VrgError::Domain(format!(
            "error weight needs alpha_bar in (0, 1], got {alpha_bar}"
        )));
    }
    if alpha.is_nan() || alpha > 1.0 {
        return Err(VrgError::Domain(format!("error weight needs alpha <= 1, got {alpha}")));
    }
    if alpha_bar > alpha {
        return Err(VrgError::Domain(format!(
            "error weight needs alpha_bar <= alpha, got alpha_bar={alpha_bar}, alpha={alpha}"
        )));
    }
    let diff = (1.0 - alpha_bar).sqrt() - (alpha - alpha_bar).sqrt();
    Ok(diff * diff / alpha_bar)
}
