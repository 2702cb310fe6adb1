//! Deterministic DDIM sampling along a trajectory, and the Monte Carlo
//! experiment that checks how per-step prediction errors accumulate.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{Result, VrgError};
use crate::forward::error_weight;
use crate::io::{read_container, write_container};
use crate::rng::{derive_seed, stream, tag};
use crate::trajectory::Trajectory;

/// One DDIM update from level `ᾱ_t` to the less noisy `ᾱ_s`:
/// `x_s = r·x_t − (r·√(1−ᾱ_t) − √(1−ᾱ_s))·ε̂` with `r = √(ᾱ_s/ᾱ_t)`.
pub fn ddim_step(x_t: &[f64], eps_hat: &[f64], alpha_bar_t: f64, alpha_bar_s: f64) -> Result<Vec<f64>> {
    if x_t.len() != eps_hat.len() {
        return Err(VrgError::DimensionMismatch {
            expected: x_t.len(),
            got: eps_hat.len(),
        });
    }
    if !(alpha_bar_t > 0.0 && alpha_bar_t < alpha_bar_s && alpha_bar_s <= 1.0) {
        return Err(VrgError::Domain(format!(
            "DDIM step needs 0 < alpha_bar_t < alpha_bar_s <= 1, got t={alpha_bar_t}, s={alpha_bar_s}"
        )));
    }
    let (ratio, noise_coef) = step_coefficients(alpha_bar_t, alpha_bar_s);
    Ok(x_t
        .iter()
        .zip(eps_hat)
        .map(|(x, e)| ratio * x - noise_coef * e)
        .collect())
}

fn step_coefficients(alpha_bar_t: f64, alpha_bar_s: f64) -> (f64, f64) {
    let ratio = (alpha_bar_s / alpha_bar_t).sqrt();
    (ratio, ratio * (1.0 - alpha_bar_t).sqrt() - (1.0 - alpha_bar_s).sqrt())
}

/// Generated samples plus the provenance needed to reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub samples: Vec<Vec<f64>>,
    pub seed: u64,
    pub trajectory: String,
    pub denoiser: String,
}

#[derive(Serialize, Deserialize)]
struct BatchHeader {
    format: String,
    n: usize,
    d: usize,
    seed: u64,
    trajectory: String,
    denoiser: String,
}

const BATCH_FORMAT: &str = "vrg-batch";

impl SampleBatch {
    pub fn new(
        samples: Vec<Vec<f64>>,
        seed: u64,
        trajectory: impl Into<String>,
        denoiser: impl Into<String>,
    ) -> Result<Self> {
        let (trajectory, denoiser) = (trajectory.into(), denoiser.into());
        if trajectory.is_empty() || denoiser.is_empty() {
            return Err(VrgError::Format("batch metadata must be non-empty".into()));
        }
        if let Some(d) = samples.first().map(Vec::len) {
            if d == 0 {
                return Err(VrgError::Format("samples must have at least one coordinate".into()));
            }
            if let Some(bad) = samples.iter().find(|s| s.len() != d) {
                return Err(VrgError::DimensionMismatch {
                    expected: d,
                    got: bad.len(),
                });
            }
        }
        Ok(Self {
            samples,
            seed,
            trajectory,
            denoiser,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = BatchHeader {
            format: BATCH_FORMAT.into(),
            n: self.len(),
            d: self.dim(),
            seed: self.seed,
            trajectory: self.trajectory.clone(),
            denoiser: self.denoiser.clone(),
        };
        let flat: Vec<f64> = self.samples.iter().flatten().copied().collect();
        write_container(path, &header, &flat)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, data): (BatchHeader, Vec<f64>) = read_container(path)?;
        if h.format != BATCH_FORMAT {
            return Err(VrgError::Format(format!(
                "expected a `{BATCH_FORMAT}` container, found `{}`",
                h.format
            )));
        }
        if h.n * h.d != data.len() || (h.n > 0 && h.d == 0) {
            return Err(VrgError::Format(format!(
                "header declares {}×{} values but the payload holds {}",
                h.n,
                h.d,
                data.len()
            )));
        }
        let samples = if h.d == 0 {
            Vec::new()
        } else {
            data.chunks_exact(h.d).map(<[f64]>::to_vec).collect()
        };
        Self::new(samples, h.seed, h.trajectory, h.denoiser)
    }
}

/// Run the sampler `n` times. Each sample starts from its own standard
/// normal draw (taken as `x_K`), steps through the trajectory from the
/// noisiest level and ends with a step to ᾱ = 1. Sample `i` depends only on
/// `(seed, i)`.
pub fn sample(denoiser: &dyn Denoiser, traj: &Trajectory, n: usize, d: usize, seed: u64) -> Result<SampleBatch> {
    if d == 0 {
        return Err(VrgError::Precondition("dimensionality must be positive".into()));
    }
    if let Some(dd) = denoiser.dim() {
        if dd != d {
            return Err(VrgError::DimensionMismatch { expected: dd, got: d });
        }
    }
    let samples = (0..n)
        .into_par_iter()
        .map(|i| sample_one(denoiser, traj, d, seed, i as u64))
        .collect::<Result<Vec<_>>>()?;
    SampleBatch::new(samples, seed, traj.label(), denoiser.id())
}

fn sample_one(denoiser: &dyn Denoiser, traj: &Trajectory, d: usize, seed: u64, index: u64) -> Result<Vec<f64>> {
    let mut rng = stream(seed, &[tag::SAMPLE_INIT, index]);
    let mut x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let ab = traj.alpha_bar();
    for k in (0..ab.len()).rev() {
        let step = k + 1;
        let wrap = |e: VrgError| VrgError::SamplerStep {
            step,
            source: Box::new(e),
        };
        let (t, s) = (ab[k], if k == 0 { 1.0 } else { ab[k - 1] });
        let key = derive_seed(seed, &[tag::SAMPLE_STEP, index, k as u64]);
        let eps = denoiser.predict_noise(&x, t, key).map_err(wrap)?;
        if eps.iter().any(|v| !v.is_finite()) {
            return Err(wrap(VrgError::NonFinite("denoiser output".into())));
        }
        x = ddim_step(&x, &eps, t, s).map_err(wrap)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub trajectory: String,
    /// `Σ_k w(ᾱ_k, α_k)·Δ(ᾱ_k)`.
    pub predicted_variance: f64,
    /// Per-dimension mean of the squared final error over all runs.
    pub empirical_variance: f64,
    /// Standard error of `empirical_variance`.
    pub standard_error: f64,
    pub n_runs: usize,
    pub d: usize,
    pub seed: u64,
    pub relative_error: f64,
    pub relative_standard_error: f64,
}

/// Sum of weighted per-step prediction errors along `traj`.
pub fn predicted_variance(traj: &Trajectory, delta_fn: &(dyn Fn(f64) -> f64 + Sync)) -> Result<f64> {
    let alpha = traj.to_alpha();
    traj.alpha_bar()
        .iter()
        .zip(alpha.as_slice())
        .map(|(&ab, &a)| Ok(error_weight(ab, a)? * delta_fn(ab)))
        .sum()
}

/// Track only the error term of the sampler: at each step from the noisiest
/// level, scale the carried error by `√(ᾱ_s/ᾱ_t)` and add the step's noise
/// coefficient times an independent `N(0, Δ(ᾱ_t))` prediction error.
pub fn propagate_error_mc(
    traj: &Trajectory,
    delta_fn: &(dyn Fn(f64) -> f64 + Sync),
    n_runs: usize,
    d: usize,
    seed: u64,
) -> Result<PropagationReport> {
    if n_runs < 2 || d == 0 {
        return Err(VrgError::Precondition(
            "need at least two runs and one dimension".into(),
        ));
    }
    let ab = traj.alpha_bar();
    let sds: Vec<f64> = ab
        .iter()
        .map(|&a| {
            let v = delta_fn(a);
            if v.is_finite() && v >= 0.0 {
                Ok(v.sqrt())
            } else {
                Err(VrgError::NonFinite(format!("Δ({a}) = {v}")))
            }
        })
        .collect::<Result<_>>()?;
    let coefs: Vec<(f64, f64)> = (0..ab.len())
        .map(|k| step_coefficients(ab[k], if k == 0 { 1.0 } else { ab[k - 1] }))
        .collect();

    let per_run: Vec<f64> = (0..n_runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[tag::PROPAGATE, r as u64]);
            let mut sq = 0.0;
            for _ in 0..d {
                let mut e = 0.0;
                for k in (0..ab.len()).rev() {
                    let (ratio, noise_coef) = coefs[k];
                    let z: f64 = StandardNormal.sample(&mut rng);
                    e = ratio * e - noise_coef * sds[k] * z;
                }
                sq += e * e;
            }
            sq / d as f64
        })
        .collect();

    let n = n_runs as f64;
    let mean = per_run.iter().sum::<f64>() / n;
    let var = per_run.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let standard_error = (var / n).sqrt();
    let predicted = predicted_variance(traj, delta_fn)?;
    let (relative_error, relative_standard_error) = if predicted > 0.0 {
        ((mean - predicted).abs() / predicted, standard_error / predicted)
    } else {
        (0.0, 0.0)
    };
    Ok(PropagationReport {
        trajectory: traj.label().to_string(),
        predicted_variance: predicted,
        empirical_variance: mean,
        standard_error,
        n_runs,
        d,
        seed,
        relative_error,
        relative_standard_error,
    })
}
