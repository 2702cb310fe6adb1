//! Cross-module invariants.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use vrg_core::denoiser::{
    gaussian_analytic_delta, train_mlp_denoiser, DataSpec, Denoiser, GaussianDataSpec, GaussianDenoiser,
    InjectedErrorCurve, PerturbedDenoiser, TrainConfig,
};
use vrg_core::forward::{diffuse, NoiseSchedule};
use vrg_core::profiler::{default_grid, profile, ErrorProfile, ProfileMeta};
use vrg_core::rng::stream;
use vrg_core::sampler::{ddim_step, sample};
use vrg_core::trajectory::{make_trajectory, ScheduleKind, Trajectory};
use vrg_core::vrg::{optimize, VrgConfig};

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn smooth_profile(scale: f64, offset: f64) -> ErrorProfile {
    let spec = GaussianDataSpec::new(vec![0.0], scale).unwrap();
    let grid = default_grid(&NoiseSchedule::default(), 64).unwrap();
    let knots = grid
        .iter()
        .map(|&ab| (ab, gaussian_analytic_delta(&spec, ab) + offset))
        .collect();
    ErrorProfile::new(knots, ProfileMeta::default()).unwrap()
}

#[test]
fn no_denoiser_beats_the_optimal_one_on_gaussian_data() {
    let spec = GaussianDataSpec::new(vec![1.0, 0.0], 0.6).unwrap();
    let data = DataSpec::Gaussian(spec.clone());
    let schedule = NoiseSchedule::default();
    let dataset = data.sample(2000, 1);
    let grid = default_grid(&schedule, 16).unwrap();

    let exact: Arc<dyn Denoiser> = Arc::new(GaussianDenoiser::new(spec.clone()).unwrap());
    let perturbed = PerturbedDenoiser::new(exact.clone(), InjectedErrorCurve::constant(0.05).unwrap());
    let cfg = TrainConfig {
        steps: 1500,
        seed: 2,
        ..TrainConfig::default()
    };
    let mlp = train_mlp_denoiser(&dataset, &schedule, &cfg).unwrap();

    let candidates: [&dyn Denoiser; 3] = [exact.as_ref(), &perturbed, &mlp];
    for d in candidates {
        let p = profile(d, &dataset, &data.id(), &grid, 4, 3).unwrap();
        for ((ab, delta), se) in p.knots().iter().zip(&p.meta().stderr) {
            let bound = gaussian_analytic_delta(&spec, *ab);
            assert!(
                *delta >= bound - 3.0 * se,
                "{}: Δ({ab}) = {delta} < {bound} − 3·{se}",
                d.id()
            );
        }
    }
}

#[test]
fn profile_ignores_thread_count_and_dataset_order() {
    let spec = GaussianDataSpec::new(vec![0.0, 2.0], 1.5).unwrap();
    let data = DataSpec::Gaussian(spec.clone());
    let denoiser = PerturbedDenoiser::new(
        Arc::new(GaussianDenoiser::new(spec).unwrap()),
        InjectedErrorCurve::new(vec![(0.0, 0.0), (1.0, 0.3)]).unwrap(),
    );
    let grid = default_grid(&NoiseSchedule::default(), 24).unwrap();
    let dataset = data.sample(4000, 5);

    let one = pool(1).install(|| profile(&denoiser, &dataset, "d", &grid, 4, 6).unwrap());
    let many = pool(5).install(|| profile(&denoiser, &dataset, "d", &grid, 4, 6).unwrap());
    assert_eq!(one, many);

    let mut reversed = dataset.clone();
    reversed.reverse();
    let other = profile(&denoiser, &reversed, "d", &grid, 4, 6).unwrap();
    for i in 0..grid.len() {
        let (a, b) = (one.deltas()[i], other.deltas()[i]);
        let se = (one.meta().stderr[i].powi(2) + other.meta().stderr[i].powi(2)).sqrt();
        assert!((a - b).abs() <= 3.0 * se, "knot {i}: {a} vs {b} (se {se})");
    }
}

#[test]
fn sampling_ignores_thread_count_and_batch_size() {
    let spec = GaussianDataSpec::new(vec![0.3, -0.2, 1.0], 0.7).unwrap();
    let denoiser = PerturbedDenoiser::new(
        Arc::new(GaussianDenoiser::new(spec).unwrap()),
        InjectedErrorCurve::constant(0.1).unwrap(),
    );
    let traj = make_trajectory(&NoiseSchedule::default(), ScheduleKind::LogSnr, 12).unwrap();
    let one = pool(1).install(|| sample(&denoiser, &traj, 300, 3, 9).unwrap());
    let many = pool(7).install(|| sample(&denoiser, &traj, 300, 3, 9).unwrap());
    assert_eq!(one, many);
    let prefix = sample(&denoiser, &traj, 120, 3, 9).unwrap();
    assert_eq!(prefix.samples[..], one.samples[..120]);
}

#[test]
fn oracle_noise_reconstructs_through_any_trajectory() {
    let mut r = stream(11, &[]);
    for _ in 0..200 {
        let k = r.random_range(1..=30);
        let mut ab: Vec<f64> = (0..k).map(|_| r.random_range(1e-4..0.9999)).collect();
        ab.sort_by(|a, b| b.total_cmp(a));
        ab.dedup();
        let traj = Trajectory::new("r", ScheduleKind::Custom, ab).unwrap();
        let d = r.random_range(1..=4);
        let x0: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
        let eps: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
        let levels = traj.alpha_bar();
        let mut x = diffuse(&x0, levels[levels.len() - 1], &eps).unwrap();
        for i in (0..levels.len()).rev() {
            let target = if i == 0 { 1.0 } else { levels[i - 1] };
            x = ddim_step(&x, &eps, levels[i], target).unwrap();
        }
        for (a, b) in x.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn dropping_the_regularizer_never_raises_cpe() {
    let schedule = NoiseSchedule::default();
    for (scale, offset) in [(0.3, 0.0), (1.0, 0.1), (2.0, 0.4)] {
        let prof = smooth_profile(scale, offset);
        for kind in [ScheduleKind::Uniform, ScheduleKind::Quadratic, ScheduleKind::LogSnr] {
            for k in [3, 5, 10, 20] {
                let base = make_trajectory(&schedule, kind, k).unwrap();
                let with = VrgConfig {
                    lambda: 1e4,
                    ..VrgConfig::for_steps(k)
                };
                let without = VrgConfig { lambda: 0.0, ..with };
                let a = optimize(&base, &prof, &with).unwrap().objective.cpe;
                let b = optimize(&base, &prof, &without).unwrap().objective.cpe;
                assert!(b <= a * (1.0 + 1e-9), "{kind} K={k}: λ=0 gives {b}, λ>0 gives {a}");
            }
        }
    }
}
