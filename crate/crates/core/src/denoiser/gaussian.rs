use super::{check_dim, check_open_unit, Denoiser, GaussianDataSpec};
use crate::error::Result;

/// Posterior-mean noise prediction for `N(mu0, sigma0²·I)` data:
/// `(x_t − √ᾱ·mu0)·√(1−ᾱ) / (ᾱ·sigma0² + 1 − ᾱ)`.
pub fn gaussian_optimal_predict(spec: &GaussianDataSpec, x_t: &[f64], alpha_bar: f64) -> Result<Vec<f64>> {
    check_open_unit(alpha_bar)?;
    check_dim(spec.dim(), x_t.len())?;
    let s = alpha_bar.sqrt();
    let gain = (1.0 - alpha_bar).sqrt() / (alpha_bar * spec.sigma0 * spec.sigma0 + 1.0 - alpha_bar);
    Ok(x_t.iter().zip(&spec.mu0).map(|(x, m)| (x - s * m) * gain).collect())
}

/// Per-dimension residual variance of [`gaussian_optimal_predict`]:
/// `ᾱ·sigma0² / (ᾱ·sigma0² + 1 − ᾱ)`.
pub fn gaussian_analytic_delta(spec: &GaussianDataSpec, alpha_bar: f64) -> f64 {
    let signal = alpha_bar * spec.sigma0 * spec.sigma0;
    let denom = signal + 1.0 - alpha_bar;
    if denom == 0.0 {
        // sigma0 = 0 at ᾱ = 1: nothing to predict from, nothing to explain.
        return 0.0;
    }
    signal / denom
}

#[derive(Debug, Clone)]
pub struct GaussianDenoiser {
    spec: GaussianDataSpec,
}

impl GaussianDenoiser {
    pub fn new(spec: GaussianDataSpec) -> Result<Self> {
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &GaussianDataSpec {
        &self.spec
    }
}

impl Denoiser for GaussianDenoiser {
    fn id(&self) -> String {
        format!("gaussian-optimal(d={},sigma0={})", self.spec.dim(), self.spec.sigma0)
    }

    fn dim(&self) -> Option<usize> {
        Some(self.spec.dim())
    }

    fn predict_noise(&self, x_t: &[f64], alpha_bar: f64, _seed: u64) -> Result<Vec<f64>> {
        gaussian_optimal_predict(&self.spec, x_t, alpha_bar)
    }
}
