use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::json;
use vrg_core::VrgError;

mod commands;
mod config;

use commands::*;
use config::ConfigFile;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  unexpected failure
  2  usage error (bad flags, unknown config keys)
  3  I/O error (missing or unwritable files)
  4  validation error (malformed or out-of-range inputs)
  5  numerical failure (non-finite values, diverged training)

Failures print a single JSON object {\"error\", \"exit_code\", \"message\"} to stderr.";

/// Trajectory optimisation for few-step diffusion sampling.
#[derive(Debug, Parser)]
#[command(name = "vrg", version, about, after_long_help = EXIT_CODES, after_help = EXIT_CODES)]
struct Cli {
    /// JSON file of parameter values. Top-level keys apply to every
    /// subcommand, an object under the subcommand's name applies to that
    /// subcommand only. Flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory receiving outputs and the run manifest.
    #[arg(long, global = true, env = "VRG_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a base trajectory from a noise schedule.
    MakeTraj(MakeTrajArgs),
    /// Train an MLP noise predictor on samples of a dataset spec.
    TrainDenoiser(TrainArgs),
    /// Measure a denoiser's prediction error across noise levels.
    Profile(ProfileArgs),
    /// Optimise a trajectory against an error profile.
    Optimize(OptimizeArgs),
    /// Draw samples with the deterministic sampler.
    Sample(SampleArgs),
    /// Monte Carlo check of error propagation along a trajectory.
    Simulate(SimulateArgs),
    /// Compare a sample batch with its ground-truth distribution.
    Eval(EvalArgs),
    /// Grid over learning portion, regulariser weight, kind and step count.
    Sweep(SweepArgs),
    /// Train, profile, optimise, sample and evaluate in one run.
    Pipeline(PipelineArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Validation(String),
    Numerical(String),
    Other(String),
}

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        CliError::Usage(m.into())
    }

    pub fn validation(m: impl Into<String>) -> Self {
        CliError::Validation(m.into())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn kind(&self) -> (&'static str, u8) {
        match self {
            CliError::Usage(_) => ("usage", 2),
            CliError::Io(_) => ("io", 3),
            CliError::Validation(_) => ("validation", 4),
            CliError::Numerical(_) => ("numerical", 5),
            CliError::Other(_) => ("other", 1),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Io(m)
            | CliError::Validation(m)
            | CliError::Numerical(m)
            | CliError::Other(m) => m,
        }
    }
}

impl From<VrgError> for CliError {
    fn from(e: VrgError) -> Self {
        let msg = e.to_string();
        if matches!(e, VrgError::Io(_)) {
            CliError::Io(msg)
        } else if e.is_validation() {
            CliError::Validation(msg)
        } else if e.is_numerical() {
            CliError::Numerical(msg)
        } else {
            CliError::Other(msg)
        }
    }
}

fn fail(e: CliError) -> ExitCode {
    let (kind, code) = e.kind();
    eprintln!(
        "{}",
        json!({ "error": kind, "exit_code": code, "message": e.message() })
    );
    ExitCode::from(code)
}

fn run() -> Result<(), CliError> {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return Ok(());
            }
            return Err(CliError::usage(e.to_string().trim().to_string()));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::usage(e.to_string()))?;
    let config = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::io(&cli.out_dir, e))?;
    let ctx = Context {
        out_dir: cli.out_dir.clone(),
        config,
        name: name.to_string(),
    };
    match cli.command {
        Command::MakeTraj(a) => make_traj(&ctx, ctx.resolve(a, sub)?),
        Command::TrainDenoiser(a) => train_denoiser(&ctx, ctx.resolve(a, sub)?),
        Command::Profile(a) => profile(&ctx, ctx.resolve(a, sub)?),
        Command::Optimize(a) => optimize(&ctx, ctx.resolve(a, sub)?),
        Command::Sample(a) => sample(&ctx, ctx.resolve(a, sub)?),
        Command::Simulate(a) => simulate(&ctx, ctx.resolve(a, sub)?),
        Command::Eval(a) => eval(&ctx, ctx.resolve(a, sub)?),
        Command::Sweep(a) => sweep(&ctx, ctx.resolve(a, sub)?),
        Command::Pipeline(a) => pipeline(&ctx, ctx.resolve(a, sub)?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
