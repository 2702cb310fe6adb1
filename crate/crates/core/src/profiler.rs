//! Measurement of the per-level prediction error Δ(ᾱ) and its
//! piecewise-linear model.

use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{Result, VrgError};
use crate::forward::{diffuse, NoiseSchedule};
use crate::interp::PiecewiseLinear;
use crate::rng::{derive_seed, stream, tag};
use crate::trajectory::{make_trajectory, ScheduleKind};

pub const DEFAULT_GRID_SIZE: usize = 64;
pub const DEFAULT_DRAWS: usize = 8;
pub const HISTOGRAM_BINS: usize = 200;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub dataset: String,
    pub denoiser: String,
    /// Dataset size times draws per sample.
    pub samples_per_knot: usize,
    pub n_draws: usize,
    pub seed: u64,
    /// Monte Carlo standard error of each knot's delta, taken over the
    /// per-sample means. Empty if unknown.
    #[serde(default)]
    pub stderr: Vec<f64>,
}

/// Profiled `(ᾱ, Δ)` knots, strictly increasing in ᾱ.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    curve: PiecewiseLinear,
    meta: ProfileMeta,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    alpha_bar: f64,
    delta: f64,
}

impl ErrorProfile {
    pub fn new(knots: Vec<(f64, f64)>, meta: ProfileMeta) -> Result<Self> {
        if let Some((a, d)) = knots
            .iter()
            .find(|(a, d)| !(*a > 0.0 && *a < 1.0) || !(*d >= 0.0 && d.is_finite()))
        {
            return Err(VrgError::Format(format!(
                "profile knot ({a}, {d}) needs alpha_bar in (0, 1) and a finite delta >= 0"
            )));
        }
        if !meta.stderr.is_empty() && meta.stderr.len() != knots.len() {
            return Err(VrgError::Format("one standard error per knot is required".into()));
        }
        let (xs, ys) = knots.into_iter().unzip();
        Ok(Self {
            curve: PiecewiseLinear::new(xs, ys)?,
            meta,
        })
    }

    pub fn alpha_bars(&self) -> &[f64] {
        self.curve.xs()
    }

    pub fn deltas(&self) -> &[f64] {
        self.curve.ys()
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.alpha_bars()
            .iter()
            .copied()
            .zip(self.deltas().iter().copied())
            .collect()
    }

    pub fn meta(&self) -> &ProfileMeta {
        &self.meta
    }

    pub fn span(&self) -> (f64, f64) {
        self.curve.span()
    }

    /// Piecewise-linear Δ(ᾱ), constant beyond the end knots.
    pub fn f_delta(&self, alpha_bar: f64) -> f64 {
        self.curve.eval_clamped(alpha_bar)
    }

    /// Right-hand slope of [`f_delta`](Self::f_delta); zero in the clamped
    /// regions.
    pub fn f_delta_slope(&self, alpha_bar: f64) -> f64 {
        self.curve.right_slope(alpha_bar)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (alpha_bar, delta) in self.knots() {
            w.serialize(CsvRow { alpha_bar, delta })?;
        }
        w.flush()?;
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    /// Read a profile CSV; the metadata sidecar is optional.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["alpha_bar", "delta"] {
            return Err(VrgError::Format(format!(
                "profile header must be `alpha_bar,delta`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let knots = r
            .deserialize::<CsvRow>()
            .map(|row| row.map(|r| (r.alpha_bar, r.delta)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let side = sidecar_path(path);
        let meta = if side.exists() {
            serde_json::from_str(&fs::read_to_string(side)?)?
        } else {
            ProfileMeta::default()
        };
        Self::new(knots, meta)
    }
}

/// `profile.csv` → `profile.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn f_delta(profile: &ErrorProfile, alpha_bar: f64) -> f64 {
    profile.f_delta(alpha_bar)
}

pub fn f_delta_slope(profile: &ErrorProfile, alpha_bar: f64) -> f64 {
    profile.f_delta_slope(alpha_bar)
}

/// `n` levels with evenly spaced half-log-SNR across the schedule, ascending.
pub fn default_grid(schedule: &NoiseSchedule, n: usize) -> Result<Vec<f64>> {
    let mut g = make_trajectory(schedule, ScheduleKind::LogSnr, n)?.alpha_bar().to_vec();
    g.reverse();
    Ok(g)
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// One noisy evaluation: returns `(ε̂, ε)` for the item keyed by `key`.
fn residual_draw(denoiser: &dyn Denoiser, x0: &[f64], alpha_bar: f64, key: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rng = stream(key, &[0]);
    let eps: Vec<f64> = (0..x0.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let xt = diffuse(x0, alpha_bar, &eps)?;
    let pred = denoiser.predict_noise(&xt, alpha_bar, key)?;
    if pred.len() != eps.len() {
        return Err(VrgError::DimensionMismatch {
            expected: eps.len(),
            got: pred.len(),
        });
    }
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(VrgError::NonFinite(format!(
            "denoiser returned a non-finite prediction at alpha_bar = {alpha_bar}"
        )));
    }
    Ok((pred, eps))
}

/// Mean and standard error of one knot's squared residuals, laid out as
/// `n_draws` consecutive values per dataset sample. Draws sharing a sample
/// are correlated, so the error is taken over per-sample means whenever
/// there are at least two samples.
fn knot_estimate(values: &[f64], n_draws: usize) -> (f64, f64) {
    let mut flat = Welford::default();
    let mut clusters = Welford::default();
    for chunk in values.chunks(n_draws) {
        chunk.iter().for_each(|&v| flat.push(v));
        clusters.push(chunk.iter().sum::<f64>() / n_draws as f64);
    }
    let se = if clusters.count() >= 2 {
        clusters.stderr()
    } else {
        flat.stderr()
    };
    (flat.mean(), se)
}

/// Estimate Δ(ᾱ) at each grid level: for every dataset sample and each of
/// `n_draws` noise draws, noise the sample, predict, and average
/// `‖ε̂ − ε‖²/d`. The result depends only on the inputs and `seed`.
pub fn profile(
    denoiser: &dyn Denoiser,
    dataset: &[Vec<f64>],
    dataset_id: &str,
    grid: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<ErrorProfile> {
    if dataset.is_empty() {
        return Err(VrgError::Precondition("dataset is empty".into()));
    }
    if n_draws == 0 {
        return Err(VrgError::Precondition("n_draws must be positive".into()));
    }
    if let Some(g) = grid.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
        return Err(VrgError::Precondition(format!("grid level {g} is outside (0, 1)")));
    }
    let mut levels = grid.to_vec();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    if levels.windows(2).any(|w| w[0] == w[1]) {
        return Err(VrgError::Precondition("grid levels must be distinct".into()));
    }

    let per_knot = dataset.len() * n_draws;
    let stats: Vec<(f64, f64)> = levels
        .par_iter()
        .enumerate()
        .map(|(j, &ab)| {
            let values: Vec<f64> = (0..per_knot)
                .into_par_iter()
                .map(|idx| {
                    let (i, r) = (idx / n_draws, idx % n_draws);
                    let key = derive_seed(seed, &[tag::PROFILE, j as u64, i as u64, r as u64]);
                    let (pred, eps) = residual_draw(denoiser, &dataset[i], ab, key)?;
                    let sq: f64 = pred.iter().zip(&eps).map(|(p, e)| (p - e).powi(2)).sum();
                    Ok(sq / eps.len() as f64)
                })
                .collect::<Result<_>>()?;
            Ok(knot_estimate(&values, n_draws))
        })
        .collect::<Result<_>>()?;

    let knots = levels.iter().zip(&stats).map(|(&a, (m, _))| (a, *m)).collect();
    let meta = ProfileMeta {
        dataset: dataset_id.to_string(),
        denoiser: denoiser.id(),
        samples_per_knot: per_knot,
        n_draws,
        seed,
        stderr: stats.iter().map(|(_, se)| *se).collect(),
    };
    ErrorProfile::new(knots, meta)
}

/// Histogram of one coordinate of the residual `ε̂ − ε` at a single level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub alpha_bar: f64,
    pub dimension: usize,
    pub lower: f64,
    pub upper: f64,
    pub counts: Vec<u64>,
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub kurtosis: f64,
}

impl ErrorHistogram {
    pub fn bin_width(&self) -> f64 {
        (self.upper - self.lower) / self.counts.len() as f64
    }

    pub fn mean_stderr(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }
}

/// Bin `n_total` residuals into 200 equal bins over `±4·sd`; values beyond
/// the range land in the end bins. Draw `i` uses dataset sample `i mod |D|`.
pub fn error_histogram(
    denoiser: &dyn Denoiser,
    dataset: &[Vec<f64>],
    alpha_bar: f64,
    dimension: usize,
    n_total: usize,
    seed: u64,
) -> Result<ErrorHistogram> {
    if n_total < HISTOGRAM_BINS {
        return Err(VrgError::Precondition(format!(
            "need at least {HISTOGRAM_BINS} draws for a {HISTOGRAM_BINS}-bin histogram, got {n_total}"
        )));
    }
    let d = dataset
        .first()
        .map(Vec::len)
        .ok_or_else(|| VrgError::Precondition("dataset is empty".into()))?;
    if dimension >= d {
        return Err(VrgError::Precondition(format!(
            "dimension index {dimension} is out of range for d = {d}"
        )));
    }
    let residuals: Vec<f64> = (0..n_total)
        .into_par_iter()
        .map(|i| {
            let key = derive_seed(seed, &[tag::HISTOGRAM, i as u64]);
            let (pred, eps) = residual_draw(denoiser, &dataset[i % dataset.len()], alpha_bar, key)?;
            Ok(pred[dimension] - eps[dimension])
        })
        .collect::<Result<_>>()?;

    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let m2 = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let m4 = residuals.iter().map(|r| (r - mean).powi(4)).sum::<f64>() / n;
    let variance = m2 * n / (n - 1.0);
    let kurtosis = if m2 > 0.0 { m4 / (m2 * m2) } else { f64::NAN };

    let half = if variance > 0.0 { 4.0 * variance.sqrt() } else { 1.0 };
    let (lower, upper) = (-half, half);
    let width = (upper - lower) / HISTOGRAM_BINS as f64;
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for r in &residuals {
        let b = ((r - lower) / width).floor();
        let b = if b < 0.0 {
            0
        } else {
            (b as usize).min(HISTOGRAM_BINS - 1)
        };
        counts[b] += 1;
    }
    Ok(ErrorHistogram {
        alpha_bar,
        dimension,
        lower,
        upper,
        counts,
        n: n_total,
        mean,
        variance,
        kurtosis,
    })
}
