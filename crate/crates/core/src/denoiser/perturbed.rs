use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Denoiser;
use crate::error::{Result, VrgError};
use crate::interp::PiecewiseLinear;
use crate::rng::{stream, tag};

/// Variance of the extra Gaussian error injected at each noise level, linear
/// between knots. Serialized as `{"knots": [[alpha_bar, delta], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve", into = "RawCurve")]
pub struct InjectedErrorCurve {
    curve: PiecewiseLinear,
}

#[derive(Serialize, Deserialize)]
struct RawCurve {
    knots: Vec<(f64, f64)>,
}

impl TryFrom<RawCurve> for InjectedErrorCurve {
    type Error = VrgError;
    fn try_from(r: RawCurve) -> Result<Self> {
        InjectedErrorCurve::new(r.knots)
    }
}

impl From<InjectedErrorCurve> for RawCurve {
    fn from(c: InjectedErrorCurve) -> Self {
        RawCurve { knots: c.knots() }
    }
}

impl InjectedErrorCurve {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.iter().any(|(_, d)| *d < 0.0) {
            return Err(VrgError::Format("injected variances must be non-negative".into()));
        }
        let (xs, ys) = knots.into_iter().unzip();
        Ok(Self {
            curve: PiecewiseLinear::new(xs, ys)?,
        })
    }

    /// The same variance `c` everywhere on `[0, 1]`.
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![(0.0, c), (1.0, c)])
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.curve
            .xs()
            .iter()
            .copied()
            .zip(self.curve.ys().iter().copied())
            .collect()
    }

    pub fn span(&self) -> (f64, f64) {
        self.curve.span()
    }

    pub fn variance_at(&self, alpha_bar: f64) -> Result<f64> {
        if !self.curve.contains(alpha_bar) {
            let (lo, hi) = self.span();
            return Err(VrgError::Domain(format!(
                "alpha_bar = {alpha_bar} lies outside the injected-error span [{lo}, {hi}]"
            )));
        }
        Ok(self.curve.eval_clamped(alpha_bar))
    }
}

/// Inner prediction plus independent `N(0, delta_inj(ᾱ))` noise per
/// coordinate, drawn from a stream keyed by `seed`.
pub fn perturbed_predict(
    inner: &dyn Denoiser,
    curve: &InjectedErrorCurve,
    x_t: &[f64],
    alpha_bar: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let var = curve.variance_at(alpha_bar)?;
    let mut out = inner.predict_noise(x_t, alpha_bar, seed)?;
    if var > 0.0 {
        let sd = var.sqrt();
        let mut rng = stream(seed, &[tag::PERTURB]);
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sd * z;
        }
    }
    Ok(out)
}

pub struct PerturbedDenoiser {
    inner: Arc<dyn Denoiser>,
    curve: InjectedErrorCurve,
}

impl PerturbedDenoiser {
    pub fn new(inner: Arc<dyn Denoiser>, curve: InjectedErrorCurve) -> Self {
        Self { inner, curve }
    }

    pub fn curve(&self) -> &InjectedErrorCurve {
        &self.curve
    }
}

impl Denoiser for PerturbedDenoiser {
    fn id(&self) -> String {
        format!("perturbed({})", self.inner.id())
    }

    fn dim(&self) -> Option<usize> {
        self.inner.dim()
    }

    fn predict_noise(&self, x_t: &[f64], alpha_bar: f64, seed: u64) -> Result<Vec<f64>> {
        perturbed_predict(self.inner.as_ref(), &self.curve, x_t, alpha_bar, seed)
    }
}
