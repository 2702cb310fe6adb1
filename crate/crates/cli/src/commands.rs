use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgMatches, Args, FromArgMatches};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use vrg_core::denoiser::{train_mlp_denoiser, DataSpec, Denoiser, DenoiserSpec, MlpDenoiser, TrainConfig};
use vrg_core::eval::{cpe, evaluate, sliced_wasserstein, EvalReport, DEFAULT_PROJECTIONS};
use vrg_core::forward::{NoiseSchedule, ScheduleParams, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS};
use vrg_core::profiler::{default_grid, ErrorProfile, DEFAULT_DRAWS, DEFAULT_GRID_SIZE};
use vrg_core::rng::{derive_seed, tag};
use vrg_core::sampler::{propagate_error_mc, SampleBatch};
use vrg_core::trajectory::{make_trajectory, ScheduleKind, Trajectory};
use vrg_core::vrg::{OptimizeOutcome, VrgConfig};
use vrg_core::{profiler, sampler, vrg};

use crate::config::{resolve, ConfigFile};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub struct Context {
    pub out_dir: PathBuf,
    pub config: Option<ConfigFile>,
    pub name: String,
}

impl Context {
    pub fn resolve<T>(&self, parsed: T, matches: &ArgMatches) -> Result<T>
    where
        T: Serialize + DeserializeOwned + FromArgMatches,
    {
        resolve(parsed, matches, self.config.as_ref(), &self.name)
    }

    fn output(&self, name: &Path) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Write `<out-dir>/<subcommand>.manifest.json`.
    fn manifest<T: Serialize>(&self, args: &T, outputs: &[&Path]) -> Result<()> {
        let manifest = json!({
            "tool": "vrg",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.name,
            "config": args,
            "outputs": outputs.iter().map(|p| p.to_string_lossy()).collect::<Vec<_>>(),
        });
        let path = self.output(Path::new(&format!("{}.manifest.json", self.name)));
        write_text(
            &path,
            &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
        )
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(
        path,
        &(serde_json::to_string_pretty(value).expect("value serializes") + "\n"),
    )
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn load_data(path: &Path) -> Result<DataSpec> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn load_trajectory(path: &Path) -> Result<Trajectory> {
    Trajectory::from_json(&read_text(path)?).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn load_profile(path: &Path) -> Result<ErrorProfile> {
    Ok(ErrorProfile::read_csv(path)?)
}

/// A `.json` path is a denoiser spec; anything else is an MLP weights file.
fn load_denoiser(path: &Path) -> Result<Arc<dyn Denoiser>> {
    if path.extension().is_some_and(|e| e == "json") {
        let spec: DenoiserSpec = serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        Ok(spec.build(path.parent().unwrap_or(Path::new(".")))?)
    } else {
        Ok(Arc::new(MlpDenoiser::load(path)?))
    }
}

/// Input paths may come from flags or from the config file, so clap cannot
/// enforce them.
fn need<'a>(p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::usage(format!("--{name} is required (as a flag or a config key)")))
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(CliError::usage(format!(
            "--{} must be positive",
            name.replace('_', "-")
        )))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScheduleArgs {
    /// Number of training timesteps T.
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub timesteps: usize,
    #[arg(long, default_value_t = DEFAULT_BETA_START)]
    pub beta_start: f64,
    #[arg(long, default_value_t = DEFAULT_BETA_END)]
    pub beta_end: f64,
}

impl ScheduleArgs {
    fn build(&self) -> Result<NoiseSchedule> {
        Ok(NoiseSchedule::from_params(ScheduleParams {
            steps: self.timesteps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
        })?)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OptimizerArgs {
    /// Learning portion γ; defaults to 0.1 for K ≤ 10 and 0.01 otherwise.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Weight λ of the terminal-level regulariser.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub step_size: f64,
    #[arg(long, default_value_t = 2000, visible_alias = "iters")]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub grad_tolerance: f64,
    /// Margin keeping every α inside (0, 1).
    #[arg(long, default_value_t = 1e-6)]
    pub eps_open: f64,
}

impl OptimizerArgs {
    fn config(&self, k: usize, gamma: Option<f64>) -> VrgConfig {
        let base = VrgConfig::for_steps(k);
        VrgConfig {
            gamma: gamma.or(self.gamma).unwrap_or(base.gamma),
            lambda: self.lambda,
            step_size: self.step_size,
            max_iters: self.max_iters,
            grad_tolerance: self.grad_tolerance,
            eps_open: self.eps_open,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainingArgs {
    /// Number of dataset samples drawn for training.
    #[arg(long, default_value_t = 10_000)]
    pub n_train: usize,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 4000)]
    pub train_steps: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2e-3)]
    pub learning_rate: f64,
}

impl TrainingArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: self.hidden.clone(),
            steps: self.train_steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProfilingArgs {
    /// Number of knots, spaced evenly in log-SNR.
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE, visible_alias = "grid")]
    pub grid_size: usize,
    /// Noise draws per dataset sample and knot.
    #[arg(long, default_value_t = DEFAULT_DRAWS, visible_alias = "draws")]
    pub n_draws: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MakeTrajArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub schedule: ScheduleArgs,
    /// uniform, quadratic or logSNR.
    #[arg(long, default_value = "quadratic")]
    pub kind: ScheduleKind,
    /// Number of sampling steps K.
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value = "trajectory.json")]
    pub out: PathBuf,
}

pub fn make_traj(ctx: &Context, a: MakeTrajArgs) -> Result<()> {
    let traj = make_trajectory(&a.schedule.build()?, a.kind, a.k)?;
    write_text(&ctx.output(&a.out), &(traj.to_json() + "\n"))?;
    ctx.manifest(&a, &[&a.out])
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub schedule: ScheduleArgs,
    /// Dataset spec (JSON).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub training: TrainingArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "denoiser.bin")]
    pub out: PathBuf,
}

fn train(
    schedule: &NoiseSchedule,
    data: &DataSpec,
    t: &TrainingArgs,
    seed: u64,
) -> Result<(MlpDenoiser, Vec<Vec<f64>>)> {
    check_positive("n_train", t.n_train)?;
    let dataset = data.sample(t.n_train, seed);
    let mlp = train_mlp_denoiser(&dataset, schedule, &t.config(seed))?;
    Ok((mlp, dataset))
}

pub fn train_denoiser(ctx: &Context, a: TrainArgs) -> Result<()> {
    let data = load_data(need(&a.data, "data")?)?;
    let (mlp, _) = train(&a.schedule.build()?, &data, &a.training, a.seed)?;
    mlp.save(&ctx.output(&a.out))?;
    ctx.manifest(&a, &[&a.out])
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProfileArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub schedule: ScheduleArgs,
    /// Denoiser spec (JSON) or MLP weights file.
    #[arg(long)]
    pub denoiser: Option<PathBuf>,
    /// Dataset spec (JSON) the profiling samples are drawn from.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of dataset samples.
    #[arg(long, default_value_t = 10_000)]
    pub n_data: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub profiling: ProfilingArgs,
    /// Seed of the dataset draw and of the profiling noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "profile.csv")]
    pub out: PathBuf,
}

fn run_profile(
    schedule: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    data: &DataSpec,
    dataset: &[Vec<f64>],
    p: &ProfilingArgs,
    seed: u64,
) -> Result<ErrorProfile> {
    check_positive("grid_size", p.grid_size)?;
    let grid = default_grid(schedule, p.grid_size)?;
    Ok(profiler::profile(
        denoiser,
        dataset,
        &data.id(),
        &grid,
        p.n_draws,
        derive_seed(seed, &[tag::PROFILE]),
    )?)
}

pub fn profile(ctx: &Context, a: ProfileArgs) -> Result<()> {
    check_positive("n_data", a.n_data)?;
    let data = load_data(need(&a.data, "data")?)?;
    let denoiser = load_denoiser(need(&a.denoiser, "denoiser")?)?;
    let dataset = data.sample(a.n_data, a.seed);
    let prof = run_profile(
        &a.schedule.build()?,
        denoiser.as_ref(),
        &data,
        &dataset,
        &a.profiling,
        a.seed,
    )?;
    prof.write_csv(&ctx.output(&a.out))?;
    ctx.manifest(&a, &[&a.out])
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OptimizeArgs {
    /// Base trajectory (JSON).
    #[arg(long, visible_alias = "traj")]
    pub trajectory: Option<PathBuf>,
    /// Error profile (CSV).
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long, default_value = "trajectory.opt.json")]
    pub out: PathBuf,
    /// Per-iteration objective trace (CSV).
    #[arg(long, default_value = "trace.csv")]
    pub trace: PathBuf,
}

fn write_outcome(ctx: &Context, out: &Path, trace: &Path, outcome: &OptimizeOutcome) -> Result<()> {
    write_text(&ctx.output(out), &(outcome.trajectory.to_json() + "\n"))?;
    write_csv(&ctx.output(trace), &outcome.trace)
}

pub fn optimize(ctx: &Context, mut a: OptimizeArgs) -> Result<()> {
    let base = load_trajectory(need(&a.trajectory, "trajectory")?)?;
    let prof = load_profile(need(&a.profile, "profile")?)?;
    a.optimizer.gamma = Some(a.optimizer.config(base.len(), None).gamma);
    let outcome = vrg::optimize(&base, &prof, &a.optimizer.config(base.len(), None))?;
    write_outcome(ctx, &a.out, &a.trace, &outcome)?;
    ctx.manifest(&a, &[&a.out, &a.trace])
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    /// Denoiser spec (JSON) or MLP weights file.
    #[arg(long)]
    pub denoiser: Option<PathBuf>,
    #[arg(long, visible_alias = "traj")]
    pub trajectory: Option<PathBuf>,
    /// Number of samples.
    #[arg(short, long, default_value_t = 10_000)]
    pub n: usize,
    /// Sample dimension, for denoisers that do not fix one.
    #[arg(long, visible_alias = "d")]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "samples.bin")]
    pub out: PathBuf,
}

fn dimension(denoiser: &dyn Denoiser, dim: Option<usize>) -> Result<usize> {
    match (denoiser.dim(), dim) {
        (Some(d), Some(given)) if d != given => Err(CliError::usage(format!(
            "--dim {given} conflicts with the denoiser's dimension {d}"
        ))),
        (Some(d), _) | (None, Some(d)) => Ok(d),
        (None, None) => Err(CliError::usage("this denoiser needs --dim")),
    }
}

pub fn sample(ctx: &Context, a: SampleArgs) -> Result<()> {
    check_positive("n", a.n)?;
    let denoiser = load_denoiser(need(&a.denoiser, "denoiser")?)?;
    let traj = load_trajectory(need(&a.trajectory, "trajectory")?)?;
    let d = dimension(denoiser.as_ref(), a.dim)?;
    let batch = sampler::sample(denoiser.as_ref(), &traj, a.n, d, a.seed)?;
    batch.save(&ctx.output(&a.out))?;
    ctx.manifest(&a, &[&a.out])
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, visible_alias = "traj")]
    pub trajectory: Option<PathBuf>,
    /// Error profile (CSV) supplying the injected per-step error variance.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000, visible_alias = "runs")]
    pub n_runs: usize,
    #[arg(long, default_value_t = 1, visible_alias = "d")]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "simulate.json")]
    pub out: PathBuf,
}

pub fn simulate(ctx: &Context, a: SimulateArgs) -> Result<()> {
    let traj = load_trajectory(need(&a.trajectory, "trajectory")?)?;
    let prof = load_profile(need(&a.profile, "profile")?)?;
    let report = propagate_error_mc(&traj, &|ab| prof.f_delta(ab), a.n_runs, a.dim, a.seed)?;
    write_json(&ctx.output(&a.out), &report)?;
    ctx.manifest(&a, &[&a.out])
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Sample batch to evaluate.
    #[arg(long, visible_alias = "batch")]
    pub samples: Option<PathBuf>,
    /// Dataset spec giving the ground truth.
    #[arg(long, visible_alias = "ref")]
    pub data: Option<PathBuf>,
    /// Reference batch; drawn from the dataset spec when absent.
    #[arg(long, visible_alias = "against")]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub n_reference: usize,
    #[arg(long, default_value_t = DEFAULT_PROJECTIONS, visible_alias = "projections")]
    pub n_projections: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "eval.json")]
    pub out: PathBuf,
}

/// Ground-truth draws kept apart from any training draws of the same seed.
fn reference_batch(data: &DataSpec, n: usize, seed: u64) -> Result<SampleBatch> {
    check_positive("n_reference", n)?;
    let s = derive_seed(seed, &[tag::DATA, 1]);
    Ok(SampleBatch::new(data.sample(n, s), s, "reference", data.id())?)
}

pub fn eval(ctx: &Context, a: EvalArgs) -> Result<()> {
    let batch = SampleBatch::load(need(&a.samples, "samples")?)?;
    let data = load_data(need(&a.data, "data")?)?;
    let reference = match &a.reference {
        Some(p) => SampleBatch::load(p)?,
        None => reference_batch(&data, a.n_reference, a.seed)?,
    };
    let report = evaluate(&batch, &reference, &data, a.n_projections, a.seed)?;
    write_json(&ctx.output(&a.out), &report)?;
    ctx.manifest(&a, &[&a.out])
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub schedule: ScheduleArgs,
    /// Denoiser spec (JSON) or MLP weights file.
    #[arg(long)]
    pub denoiser: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.05,0.1")]
    pub gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "quadratic")]
    pub kinds: Vec<ScheduleKind>,
    /// Step counts K.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 5000)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 10_000)]
    pub n_reference: usize,
    #[arg(long, default_value_t = DEFAULT_PROJECTIONS, visible_alias = "projections")]
    pub n_projections: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    gamma: f64,
    lambda: f64,
    kind: ScheduleKind,
    #[serde(rename = "K")]
    k: usize,
    cpe_base: f64,
    cpe_opt: f64,
    swd_base: f64,
    swd_opt: f64,
}

pub fn sweep(ctx: &Context, a: SweepArgs) -> Result<()> {
    if a.optimizer.gamma.is_some() {
        return Err(CliError::usage(
            "sweep takes its learning portions from --gammas, not --gamma",
        ));
    }
    check_positive("n_samples", a.n_samples)?;
    let schedule = a.schedule.build()?;
    let denoiser = load_denoiser(need(&a.denoiser, "denoiser")?)?;
    let data = load_data(need(&a.data, "data")?)?;
    let prof = load_profile(need(&a.profile, "profile")?)?;
    let d = dimension(denoiser.as_ref(), Some(data.dim()))?;
    let reference = reference_batch(&data, a.n_reference, a.seed)?;
    let sample_seed = derive_seed(a.seed, &[tag::SAMPLE_INIT]);
    let swd = |traj: &Trajectory| -> Result<f64> {
        let batch = sampler::sample(denoiser.as_ref(), traj, a.n_samples, d, sample_seed)?;
        Ok(sliced_wasserstein(
            &batch.samples,
            &reference.samples,
            a.n_projections,
            a.seed,
        )?)
    };
    let mut rows = Vec::new();
    for &kind in &a.kinds {
        for &k in &a.ks {
            let base = make_trajectory(&schedule, kind, k)?;
            let cpe_base = cpe(&base, &prof)?;
            let swd_base = swd(&base)?;
            for &lambda in &a.lambdas {
                for &gamma in &a.gammas {
                    let mut config = a.optimizer.config(k, Some(gamma));
                    config.lambda = lambda;
                    let outcome = vrg::optimize(&base, &prof, &config)?;
                    let swd_opt = if outcome.trajectory == base {
                        swd_base
                    } else {
                        swd(&outcome.trajectory)?
                    };
                    rows.push(SweepRow {
                        gamma,
                        lambda,
                        kind,
                        k,
                        cpe_base,
                        cpe_opt: outcome.objective.cpe,
                        swd_base,
                        swd_opt,
                    });
                }
            }
        }
    }
    write_csv(&ctx.output(&a.out), &rows)?;
    ctx.manifest(&a, &[&a.out])
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub schedule: ScheduleArgs,
    /// Dataset spec (JSON).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub profiling: ProfilingArgs,
    #[arg(long, default_value = "quadratic")]
    pub kind: ScheduleKind,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long, default_value_t = 10_000)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 10_000)]
    pub n_reference: usize,
    #[arg(long, default_value_t = DEFAULT_PROJECTIONS, visible_alias = "projections")]
    pub n_projections: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct PipelineReport {
    cpe_base: f64,
    cpe_opt: f64,
    objective_base: f64,
    objective_opt: f64,
    iterations: usize,
    base: EvalReport,
    optimized: EvalReport,
}

pub fn pipeline(ctx: &Context, mut a: PipelineArgs) -> Result<()> {
    a.optimizer.gamma = Some(a.optimizer.config(a.k, None).gamma);
    check_positive("n_samples", a.n_samples)?;
    let schedule = a.schedule.build()?;
    let data = load_data(need(&a.data, "data")?)?;

    let (mlp, dataset) = train(&schedule, &data, &a.training, a.seed)?;
    let weights = Path::new("denoiser.bin");
    mlp.save(&ctx.output(weights))?;

    let prof = run_profile(&schedule, &mlp, &data, &dataset, &a.profiling, a.seed)?;
    let profile_path = Path::new("profile.csv");
    prof.write_csv(&ctx.output(profile_path))?;

    let base = make_trajectory(&schedule, a.kind, a.k)?;
    let base_path = Path::new("trajectory.base.json");
    write_text(&ctx.output(base_path), &(base.to_json() + "\n"))?;

    let outcome = vrg::optimize(&base, &prof, &a.optimizer.config(a.k, None))?;
    let (opt_path, trace_path) = (Path::new("trajectory.opt.json"), Path::new("trace.csv"));
    write_outcome(ctx, opt_path, trace_path, &outcome)?;

    let reference = reference_batch(&data, a.n_reference, a.seed)?;
    let sample_seed = derive_seed(a.seed, &[tag::SAMPLE_INIT]);
    let mut reports = Vec::new();
    let (sb, so) = (Path::new("samples.base.bin"), Path::new("samples.opt.bin"));
    for (traj, path) in [(&base, sb), (&outcome.trajectory, so)] {
        let batch = sampler::sample(&mlp, traj, a.n_samples, data.dim(), sample_seed)?;
        batch.save(&ctx.output(path))?;
        reports.push(evaluate(&batch, &reference, &data, a.n_projections, a.seed)?);
    }
    let optimized = reports.pop().expect("two reports");
    let report = PipelineReport {
        cpe_base: outcome.base_objective.cpe,
        cpe_opt: outcome.objective.cpe,
        objective_base: outcome.base_objective.total,
        objective_opt: outcome.objective.total,
        iterations: outcome.iterations,
        base: reports.pop().expect("two reports"),
        optimized,
    };
    let eval_path = Path::new("eval.json");
    write_json(&ctx.output(eval_path), &report)?;

    let summary: Value = json!({
        "swd_base": report.base.swd,
        "swd_opt": report.optimized.swd,
        "cpe_base": report.cpe_base,
        "cpe_opt": report.cpe_opt,
    });
    println!("{summary}");
    ctx.manifest(
        &a,
        &[
            weights,
            profile_path,
            base_path,
            opt_path,
            trace_path,
            sb,
            so,
            eval_path,
        ],
    )
}
