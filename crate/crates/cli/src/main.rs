//! `rl2`: train a flow on real images once, then score any image set against it.
//!
//! Exit codes: 0 success, 2 input/format error, 3 numerical failure,
//! 4 dimension incompatibility.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rl2_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use rl2_core::Error as E;
        match self {
            CliError::Core(E::DimensionMismatch { .. }) => 4,
            CliError::Core(E::NonFinite(_) | E::NumericalDomain(_) | E::Divergence { .. }) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rl2", version, about = "RL2 image-set quality metric")]
pub struct Cli {
    /// Flat `key = value` experiment file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Root seed; every subsystem derives its own stream from it (default 42).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Seed of the built-in feature extractor's fixed filters (default 42).
    #[arg(long, global = true)]
    pub extractor_seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded corpus of procedural texture images.
    Synth(SynthArgs),
    /// Extract features of an image directory into an RL2F file.
    Extract(ExtractArgs),
    /// Fit the flow to real features; writes an RL2M checkpoint and a report.
    Train(TrainArgs),
    /// RL2 (and optionally FID) of an evaluated set against the real set.
    Eval(EvalArgs),
    /// Apply one degradation to every image of a directory.
    Degrade(DegradeArgs),
    /// Per-sample NLL scores, with ROC/AUC when labels are given.
    Filter(FilterArgs),
    /// Spread of RL2 over seeded subsamples of several sizes.
    Stability(StabilityArgs),
    /// RL2 across severity ladders of one or more degradation kinds.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of images (default 100).
    #[arg(long)]
    pub count: Option<usize>,
    /// Side length in pixels (default 64).
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Image directory.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output RL2F file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Real images (directory) or features (RL2F file).
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Output directory for the report (default: current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint path (default: OUT/model.rl2m).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Number of coupling layers.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Hidden widths of every subnet, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub scale_clamp: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricChoice {
    Rl2,
    Fid,
    Both,
}

impl std::str::FromStr for MetricChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Real images (directory) or features (RL2F file).
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Evaluated images (directory) or features (RL2F file).
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricChoice>,
    /// Directory for metrics.csv; stdout only when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// Image directory.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// blur, salt_pepper, rect_patch or diffusion.
    #[arg(long)]
    pub kind: Option<String>,
    /// Blur sigma, salt-and-pepper probability, rectangle count or diffusion step.
    #[arg(long)]
    pub severity: Option<f64>,
    #[arg(long)]
    pub diffusion_steps: Option<usize>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Images (directory) or features (RL2F file) to score.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// `name,label` CSV, 1 marking artifacts.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub real: Option<PathBuf>,
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Subsample sizes, comma separated (default 30,100,300).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Resamples per size (default 10).
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Clean image directory; its first half is the reference, the second half is degraded.
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Comma-separated kinds, or `all` (default).
    #[arg(long, value_delimiter = ',')]
    pub kind: Option<Vec<String>>,
    /// Ladder for a single kind; per-kind ladders come from `severities.<kind>` config keys.
    #[arg(long, value_delimiter = ',')]
    pub severities: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub diffusion_steps: Option<usize>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("rl2: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
