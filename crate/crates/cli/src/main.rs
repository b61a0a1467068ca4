//! `gapgp`: sample, design, fit, predict, eval and verify for the
//! reaction-diffusion GP models.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure, 4 verification failure.

mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{FitArgs, ModelArgs, Regime};

#[derive(Debug, Parser)]
#[command(name = "gapgp", version, about = "Reaction-diffusion Gaussian process toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw synthetic (u, y) fields from the joint prior.
    Sample(SampleArgs),
    /// Write a maximin Latin hypercube design as an x,t CSV.
    Design(DesignArgs),
    /// Estimate hyperparameters by maximum marginal likelihood.
    Fit(FitCmd),
    /// Posterior mean and variance from a fitted model.
    Predict(PredictArgs),
    /// Repeated train/test splits with Q² and coverage scores.
    Eval(EvalArgs),
    /// Compare the kernels and special functions against independent oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Grid points along x for the truth field.
    #[arg(long)]
    pub nx: Option<usize>,
    /// Grid points along t for the truth field.
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Scattered observations per channel (maximin LHD).
    #[arg(long)]
    pub n_obs: Option<usize>,
    #[arg(long, default_value = "data.csv")]
    pub out_data: PathBuf,
    #[arg(long, default_value = "truth.csv")]
    pub out_truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long, default_value_t = 40)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Annealing iterations.
    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,
    #[arg(long, value_parser = parse_range, default_value = "0,1")]
    pub x_range: (f64, f64),
    #[arg(long, value_parser = parse_range, default_value = "0,1")]
    pub t_range: (f64, f64),
    #[arg(long, default_value = "design.csv")]
    pub out: PathBuf,
}

/// Input data options shared by fit, predict and eval.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Expression CSV with header gene,channel,x,t,value.
    #[arg(long)]
    pub data: PathBuf,
    /// Keep only rows of this gene.
    #[arg(long)]
    pub gene: Option<String>,
    /// Drop rows with t inside this closed window, e.g. `0,40`.
    #[arg(long, value_parser = parse_range)]
    pub exclude_time: Option<(f64, f64)>,
    /// Fail on the first malformed row instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, value_enum)]
    pub regime: Option<Regime>,
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Map the data's bounding box onto [0, l] × [0, 1] before fitting.
    #[arg(long)]
    pub normalize: bool,
    /// Output JSON report (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Report written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Query locations as an x,t CSV.
    #[arg(long, conflicts_with_all = ["grid", "truth"])]
    pub query: Option<PathBuf>,
    /// Regular query grid `NX,NT` over the data's bounding box.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    /// Expression CSV of held-out values: predict there and report scores.
    #[arg(long, conflicts_with = "grid")]
    pub truth: Option<PathBuf>,
    /// Channels to predict (default both).
    #[arg(long, value_delimiter = ',')]
    pub channels: Vec<gapgp::Channel>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Fraction of rows used for training in each split.
    #[arg(long)]
    pub train_frac: Option<f64>,
    /// Number of random splits; split i uses seed + i.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Re-estimate the free hyperparameters on every training split.
    #[arg(long)]
    pub refit: bool,
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "quick")]
    pub profile: verify::Profile,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got {s:?}"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(format!("invalid range [{a}, {b}]"));
    }
    Ok((a, b))
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `NX,NT`, got {s:?}"))?;
    let nx: usize = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let nt: usize = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if nx < 2 || nt < 2 {
        return Err("grid needs at least 2 points per axis".into());
    }
    Ok((nx, nt))
}

/// Raised by `verify` when a check fails, after the report has been written.
#[derive(Debug)]
pub struct VerificationFailed(pub usize);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} verification check(s) failed", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return 4;
    }
    match err.chain().find_map(|e| e.downcast_ref::<gapgp::Error>()) {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => commands::sample(&a),
        Command::Design(a) => commands::design(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Verify(a) => verify::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
