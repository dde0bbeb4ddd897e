//! `ppgbp` command line: synthesize sessions, fit interval models, evaluate errors.

pub mod config;
mod evaluate;
mod fit;
mod sessions;
mod synth;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use ppgbp_core::{ErrorMetric, Selection};

pub use config::{FileConfig, CONFIG_HELP};

#[derive(Debug, Parser)]
#[command(name = "ppgbp", version, about = "PPG to blood pressure ARX pipeline", after_long_help = CONFIG_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic breath-hold sessions with known coupling.
    #[command(after_long_help = CONFIG_HELP)]
    Synth(SynthArgs),
    /// Fit SBP and DBP models for every annotated interval.
    #[command(after_long_help = CONFIG_HELP)]
    Fit(FitArgs),
    /// Compute model and prediction error tables from sessions and fitted models.
    #[command(after_long_help = CONFIG_HELP)]
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Base RNG seed (overrides synth.rng_seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of subjects, written as S01, S02, ...
    #[arg(long, default_value_t = 15)]
    pub subjects: usize,
    /// Beat-level noise SD in mmHg (overrides synth.noise_sd_mmhg).
    #[arg(long, allow_hyphen_values = true)]
    pub noise_sd: Option<f64>,
    /// TOML config file (keys listed below).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Directory of `<id>_recording.csv` / `<id>_annotations.csv` pairs.
    #[arg(long)]
    pub sessions: PathBuf,
    /// Output directory; receives `models/`, `grids/` and `fit_summary.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// `mse` or `aic` (overrides fit.selection).
    #[arg(long)]
    pub selection: Option<Selection>,
    /// TOML config file (keys listed below).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Session directory, as for `fit`.
    #[arg(long)]
    pub sessions: PathBuf,
    /// The `models` directory written by `fit`.
    #[arg(long)]
    pub models: PathBuf,
    /// Output directory for tables, report and residuals.
    #[arg(long)]
    pub out: PathBuf,
    /// `free-run` or `one-step` (overrides eval.error_metric).
    #[arg(long)]
    pub error_metric: Option<ErrorMetric>,
    /// Tukey-Kramer level (overrides eval.alpha).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// TOML config file (keys listed below).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Runs a command and returns the warnings it produced.
pub fn run(cli: Cli) -> anyhow::Result<Vec<String>> {
    match cli.command {
        Command::Synth(a) => synth::run(&a),
        Command::Fit(a) => with_jobs(a.jobs, || fit::run(&a)),
        Command::Evaluate(a) => with_jobs(a.jobs, || evaluate::run(&a)),
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> anyhow::Result<T> + Send) -> anyhow::Result<T> {
    match jobs {
        None => f(),
        Some(0) => anyhow::bail!("--jobs must be >= 1"),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f),
    }
}
