//! Sample- and trajectory-quality metrics.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::DataSpec;
use crate::error::{Result, VrgError};
use crate::profiler::ErrorProfile;
use crate::rng::{stream, tag};
use crate::sampler::SampleBatch;
use crate::trajectory::Trajectory;
use crate::vrg::objective;

pub const DEFAULT_PROJECTIONS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub swd: f64,
    pub mean_error: f64,
    pub cov_error: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub n_projections: usize,
    pub seed: u64,
}

/// Cumulative prediction error of a trajectory under a profile.
pub fn cpe(traj: &Trajectory, profile: &ErrorProfile) -> Result<f64> {
    Ok(objective(&traj.to_alpha(), traj, profile, 0.0)?.cpe)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Quantile of sorted data at level `q`, linear between order statistics
/// placed at `(i + ½)/n`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = (q * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if frac == 0.0 || i + 1 >= n {
        sorted[i]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

/// 1-D 2-Wasserstein distance between two empirical samples.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a.to_vec()), sorted(b.to_vec()));
    let sum: f64 = if a.len() == b.len() {
        a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
    } else {
        let m = a.len().max(b.len());
        (0..m)
            .map(|i| {
                let q = (i as f64 + 0.5) / m as f64;
                (quantile(&a, q) - quantile(&b, q)).powi(2)
            })
            .sum::<f64>()
            / m as f64
    };
    sum.sqrt()
}

/// Unit direction number `index` of the stream keyed by `seed`.
fn direction(d: usize, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = stream(seed, &[tag::PROJECTION, index as u64]);
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Mean over random unit directions of the 1-D 2-Wasserstein distance
/// between the projected samples.
pub fn sliced_wasserstein(a: &[Vec<f64>], b: &[Vec<f64>], n_projections: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(VrgError::Precondition("both batches must be non-empty".into()));
    }
    if n_projections == 0 {
        return Err(VrgError::Precondition("need at least one projection".into()));
    }
    let d = a[0].len();
    if let Some(bad) = a.iter().chain(b).find(|x| x.len() != d) {
        return Err(VrgError::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let project = |xs: &[Vec<f64>], u: &[f64]| -> Vec<f64> {
        xs.iter().map(|x| x.iter().zip(u).map(|(p, q)| p * q).sum()).collect()
    };
    let per: Vec<f64> = (0..n_projections)
        .into_par_iter()
        .map(|i| {
            let u = direction(d, seed, i);
            wasserstein_1d(&project(a, &u), &project(b, &u))
        })
        .collect();
    Ok(per.iter().sum::<f64>() / n_projections as f64)
}

pub fn sliced_wasserstein_batches(a: &SampleBatch, b: &SampleBatch, n_projections: usize, seed: u64) -> Result<f64> {
    sliced_wasserstein(&a.samples, &b.samples, n_projections, seed)
}

/// `(‖mean − μ‖₂, ‖cov − Σ‖_F)` against the reference's analytic moments.
/// The batch covariance uses the unbiased normalisation.
pub fn moment_diagnostics(samples: &[Vec<f64>], reference: &DataSpec) -> Result<(f64, f64)> {
    let d = reference.dim();
    if samples.is_empty() {
        return Err(VrgError::Precondition("batch is empty".into()));
    }
    if let Some(bad) = samples.iter().find(|x| x.len() != d) {
        return Err(VrgError::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![vec![0.0; d]; d];
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    let denom = if samples.len() > 1 { n - 1.0 } else { 1.0 };
    let ref_mean = reference.mean();
    let ref_cov = reference.covariance();
    let mean_error = mean
        .iter()
        .zip(&ref_mean)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut frob = 0.0;
    for i in 0..d {
        for j in 0..d {
            frob += (cov[i][j] / denom - ref_cov[i][j]).powi(2);
        }
    }
    Ok((mean_error, frob.sqrt()))
}

/// Full report: sliced-Wasserstein distance from `batch` to `against` plus
/// moment errors relative to `reference`.
pub fn evaluate(
    batch: &SampleBatch,
    against: &SampleBatch,
    reference: &DataSpec,
    n_projections: usize,
    seed: u64,
) -> Result<EvalReport> {
    let swd = sliced_wasserstein_batches(batch, against, n_projections, seed)?;
    let (mean_error, cov_error) = moment_diagnostics(&batch.samples, reference)?;
    Ok(EvalReport {
        swd,
        mean_error,
        cov_error,
        n_a: batch.len(),
        n_b: against.len(),
        n_projections,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{GaussianDataSpec, GmmComponent, GmmDataSpec};
    use crate::forward::error_weight;
    use crate::profiler::ProfileMeta;
    use crate::trajectory::{AlphaVector, ScheduleKind};
    use crate::vrg::objective;
    use rand::Rng;

    #[test]
    fn identical_batches_are_at_distance_zero() {
        let xs = DataSpec::Gaussian(GaussianDataSpec::standard(3)).sample(200, 1);
        assert_eq!(sliced_wasserstein(&xs, &xs, 32, 0).unwrap(), 0.0);
        let mut shuffled = xs.clone();
        shuffled.reverse();
        assert_eq!(sliced_wasserstein(&xs, &shuffled, 32, 0).unwrap(), 0.0);
    }

    #[test]
    fn symmetric() {
        let a = DataSpec::Gaussian(GaussianDataSpec::standard(2)).sample(300, 1);
        let b = DataSpec::Gaussian(GaussianDataSpec::new(vec![0.5, 0.0], 1.2).unwrap()).sample(200, 2);
        let ab = sliced_wasserstein(&a, &b, 64, 3).unwrap();
        let ba = sliced_wasserstein(&b, &a, 64, 3).unwrap();
        assert!((ab - ba).abs() < 1e-14);
    }

    #[test]
    fn point_masses_follow_the_projection_law() {
        let r = 2.5;
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![r, 0.0]];
        let n = 20_000;
        let swd = sliced_wasserstein(&a, &b, n, 7).unwrap();
        // |u·e| for u uniform on the circle has mean 2/π and variance ½ − 4/π².
        let expected = 2.0 * r / std::f64::consts::PI;
        let sd = r * (0.5 - 4.0 / std::f64::consts::PI.powi(2)).sqrt() / (n as f64).sqrt();
        assert!((swd - expected).abs() < 4.0 * sd, "{swd} vs {expected}");
    }

    #[test]
    fn monotone_in_shift() {
        let base = DataSpec::Gaussian(GaussianDataSpec::standard(2)).sample(4000, 1);
        let d: Vec<f64> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&s| {
                let other = DataSpec::Gaussian(GaussianDataSpec::new(vec![s, 0.0], 1.0).unwrap()).sample(4000, 2);
                sliced_wasserstein(&base, &other, 128, 5).unwrap()
            })
            .collect();
        assert!(d[0] < d[1] && d[1] < d[2], "{d:?}");
        // For a pure shift the sliced distance tends to 2δ/π.
        assert!((d[2] - 2.0 / std::f64::consts::PI).abs() < 0.1);
    }

    #[test]
    fn unequal_sizes_use_quantile_matching() {
        // Levels 1/8, 3/8, 5/8, 7/8: quantiles of {1, 2} are 1, 1.25, 1.75, 2
        // against 1, 1, 2, 2, so W2² = 2·(1/4)²/4.
        let w = wasserstein_1d(&[1.0, 2.0], &[1.0, 1.0, 2.0, 2.0]);
        assert!((w - (2.0f64 * 0.0625 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(w, wasserstein_1d(&[2.0, 2.0, 1.0, 1.0], &[2.0, 1.0]));
    }

    #[test]
    fn rejects_mismatched_inputs() {
        assert!(sliced_wasserstein(&[vec![0.0]], &[vec![0.0, 1.0]], 4, 0).is_err());
        assert!(sliced_wasserstein(&[], &[vec![0.0]], 4, 0).is_err());
    }

    #[test]
    fn moments_of_reference_draws() {
        let spec = DataSpec::Gaussian(GaussianDataSpec::new(vec![1.0, -1.0], 0.7).unwrap());
        let n = 100_000;
        let (me, ce) = moment_diagnostics(&spec.sample(n, 3), &spec).unwrap();
        let trace = 2.0 * 0.49;
        assert!(me < 4.0 * (trace / n as f64).sqrt());
        assert!(ce < 0.02);

        let point = DataSpec::Gaussian(GaussianDataSpec::new(vec![2.0, 3.0], 0.0).unwrap());
        let copies = vec![vec![2.0, 3.0]; 10];
        assert_eq!(moment_diagnostics(&copies, &point).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn mixture_moments_agree_with_draws() {
        let spec = DataSpec::Gmm(
            GmmDataSpec::new(vec![
                GmmComponent {
                    weight: 0.5,
                    mu: vec![1.0, 1.0],
                    sigma: 0.3,
                },
                GmmComponent {
                    weight: 0.5,
                    mu: vec![-1.0, -1.0],
                    sigma: 0.3,
                },
            ])
            .unwrap(),
        );
        let cov = spec.covariance();
        assert!((cov[0][1] - 1.0).abs() < 1e-12 && (cov[0][0] - 1.09).abs() < 1e-12);
        let (me, ce) = moment_diagnostics(&spec.sample(100_000, 9), &spec).unwrap();
        assert!(me < 0.02 && ce < 0.03, "{me} {ce}");
    }

    fn random_profile(rng: &mut impl Rng) -> ErrorProfile {
        let mut xs: Vec<f64> = (0..6).map(|_| rng.random_range(1e-6..0.9999)).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        xs.dedup();
        let knots = xs.iter().map(|&x| (x, rng.random_range(0.0..1.0))).collect();
        ErrorProfile::new(knots, ProfileMeta::default()).unwrap()
    }

    #[test]
    fn cpe_equals_unregularized_objective() {
        let mut rng = stream(1, &[]);
        for _ in 0..50 {
            let k = rng.random_range(1..15);
            let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..0.99)).collect();
            let t = Trajectory::from_alpha("r", ScheduleKind::Custom, &AlphaVector::new(alpha).unwrap()).unwrap();
            let p = random_profile(&mut rng);
            let o = objective(&t.to_alpha(), &t, &p, 0.0).unwrap();
            assert_eq!(cpe(&t, &p).unwrap(), o.cpe);
            let back = Trajectory::from_json(&t.to_json()).unwrap();
            assert_eq!(cpe(&back, &p).unwrap(), o.cpe);
        }
    }

    #[test]
    fn cpe_constant_profile_direct_sum() {
        let (a, c, k): (f64, f64, i32) = (0.7, 0.4, 6);
        let t = Trajectory::from_alpha(
            "c",
            ScheduleKind::Custom,
            &AlphaVector::new(vec![a; k as usize]).unwrap(),
        )
        .unwrap();
        let p = ErrorProfile::new(vec![(1e-9, c), (1.0 - 1e-9, c)], ProfileMeta::default()).unwrap();
        let direct: f64 = (1..=k).map(|i| error_weight(a.powi(i), a).unwrap() * c).sum();
        assert!((cpe(&t, &p).unwrap() - direct).abs() < 1e-12 * direct);
    }
}
