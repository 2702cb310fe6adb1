//! ε-predictors.
//!
//! Every predictor is keyed by the continuous noise level ᾱ rather than an
//! integer timestep, so trajectories moved off the training grid can still be
//! evaluated. Predictors receive a per-call seed; deterministic ones ignore it.

mod data;
mod gaussian;
mod gmm;
mod mlp;
mod perturbed;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VrgError};

pub use data::{DataSpec, GaussianDataSpec, GmmComponent, GmmDataSpec};
pub use gaussian::{gaussian_analytic_delta, gaussian_optimal_predict, GaussianDenoiser};
pub use gmm::{gmm_optimal_predict, GmmDenoiser};
pub use mlp::{train_mlp_denoiser, MlpDenoiser, TrainConfig};
pub use perturbed::{perturbed_predict, InjectedErrorCurve, PerturbedDenoiser};

pub trait Denoiser: Send + Sync {
    /// Short identifier recorded in profile and batch metadata.
    fn id(&self) -> String;

    /// Required input dimensionality, if the predictor fixes one.
    fn dim(&self) -> Option<usize>;

    /// Predicted noise for one noisy sample at level `alpha_bar`.
    fn predict_noise(&self, x_t: &[f64], alpha_bar: f64, seed: u64) -> Result<Vec<f64>>;

    fn predict_batch(&self, xs: &[Vec<f64>], alpha_bar: f64, seeds: &[u64]) -> Result<Vec<Vec<f64>>> {
        xs.iter()
            .zip(seeds)
            .map(|(x, &s)| self.predict_noise(x, alpha_bar, s))
            .collect()
    }
}

pub(crate) fn check_open_unit(alpha_bar: f64) -> Result<()> {
    if alpha_bar > 0.0 && alpha_bar < 1.0 {
        Ok(())
    } else {
        Err(VrgError::Domain(format!(
            "the optimal predictor is degenerate at alpha_bar = {alpha_bar}; need (0, 1)"
        )))
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(VrgError::DimensionMismatch { expected, got })
    }
}

/// On-disk description of a predictor. Any [`DataSpec`] document is also a
/// valid `DenoiserSpec` and selects the optimal predictor for that data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DenoiserSpec {
    Gaussian(GaussianDataSpec),
    Gmm(GmmDataSpec),
    Mlp {
        weights: String,
    },
    Perturbed {
        inner: Box<DenoiserSpec>,
        curve: InjectedErrorCurve,
    },
}

impl DenoiserSpec {
    /// Build the predictor. Relative weight paths are resolved against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Arc<dyn Denoiser>> {
        Ok(match self {
            DenoiserSpec::Gaussian(spec) => Arc::new(GaussianDenoiser::new(spec.clone())?),
            DenoiserSpec::Gmm(spec) => Arc::new(GmmDenoiser::new(spec.clone())?),
            DenoiserSpec::Mlp { weights } => {
                let path = base_dir.join(weights);
                Arc::new(MlpDenoiser::load(&path)?)
            }
            DenoiserSpec::Perturbed { inner, curve } => {
                Arc::new(PerturbedDenoiser::new(inner.build(base_dir)?, curve.clone()))
            }
        })
    }
}

impl From<DataSpec> for DenoiserSpec {
    fn from(d: DataSpec) -> Self {
        match d {
            DataSpec::Gaussian(g) => DenoiserSpec::Gaussian(g),
            DataSpec::Gmm(g) => DenoiserSpec::Gmm(g),
        }
    }
}
