use super::{check_dim, check_open_unit, Denoiser, GmmDataSpec};
use crate::error::{Result, VrgError};

/// Exact posterior-mean noise prediction for an isotropic Gaussian mixture.
///
/// Responsibilities are evaluated in the log domain and normalised after
/// subtracting the largest log-weight.
pub fn gmm_optimal_predict(spec: &GmmDataSpec, x_t: &[f64], alpha_bar: f64) -> Result<Vec<f64>> {
    check_open_unit(alpha_bar)?;
    check_dim(spec.dim(), x_t.len())?;
    let d = x_t.len() as f64;
    let s = alpha_bar.sqrt();

    let log_w: Vec<f64> = spec
        .components
        .iter()
        .map(|c| {
            let var = alpha_bar * c.sigma * c.sigma + 1.0 - alpha_bar;
            let dist2: f64 = x_t.iter().zip(&c.mu).map(|(x, m)| (x - s * m).powi(2)).sum();
            c.weight.ln() - 0.5 * d * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * dist2 / var
        })
        .collect();
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let resp: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = resp.iter().sum();
    assert!(
        total > 0.0 && total.is_finite(),
        "responsibilities vanished after stabilisation"
    );

    let mut x0_mean = vec![0.0; x_t.len()];
    for (c, r) in spec.components.iter().zip(&resp) {
        let r = r / total;
        let var = alpha_bar * c.sigma * c.sigma + 1.0 - alpha_bar;
        let gain = s * c.sigma * c.sigma / var;
        for ((acc, x), m) in x0_mean.iter_mut().zip(x_t).zip(&c.mu) {
            *acc += r * (m + gain * (x - s * m));
        }
    }
    let noise_scale = (1.0 - alpha_bar).sqrt();
    let out: Vec<f64> = x_t
        .iter()
        .zip(&x0_mean)
        .map(|(x, m)| (x - s * m) / noise_scale)
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(VrgError::NonFinite(format!(
            "mixture prediction at alpha_bar = {alpha_bar}"
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GmmDenoiser {
    spec: GmmDataSpec,
}

impl GmmDenoiser {
    pub fn new(spec: GmmDataSpec) -> Result<Self> {
        Ok(Self { spec })
    }
}

impl Denoiser for GmmDenoiser {
    fn id(&self) -> String {
        format!(
            "gmm-optimal(d={},components={})",
            self.spec.dim(),
            self.spec.components.len()
        )
    }

    fn dim(&self) -> Option<usize> {
        Some(self.spec.dim())
    }

    fn predict_noise(&self, x_t: &[f64], alpha_bar: f64, _seed: u64) -> Result<Vec<f64>> {
        gmm_optimal_predict(&self.spec, x_t, alpha_bar)
    }
}
