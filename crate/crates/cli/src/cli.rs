use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trd_core::LossScope;

use crate::config::Wire;

#[derive(Debug, Parser)]
#[command(name = "trd", version, about = "Few-shot classification and regression as replaced token detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the built-in tasks with their templates and label words.
    Tasks,
    /// Show the prompt a task builds for one example.
    Render(RenderArgs),
    /// Run the few-shot protocol for one K (or a K sweep with --k-sweep).
    Run(RunArgs),
    /// Run the protocol for several K and write the learning curve.
    Sweep(SweepArgs),
    /// Write a synthetic keyword corpus and a matching run config.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Built-in task name or task file.
    pub task: String,
    pub s1: String,
    pub s2: Option<String>,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Built-in task name or task file.
    #[arg(long)]
    pub task: Option<String>,
    /// Labelled pool the few-shot splits are sampled from.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Examples per class.
    #[arg(short, long)]
    pub k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub learning_rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_length: Option<usize>,
    /// full-sequence or label-only.
    #[arg(long)]
    pub loss_scope: Option<LossScope>,
    /// `toy` or `external:<command>`; defaults to $TRD_BACKEND, then `toy`.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long, value_enum)]
    pub wire: Option<Wire>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Backend jobs in flight at once.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Report path; the sweep curve goes next to it as `.csv`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub k_sweep: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// K values, ascending.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ks: Vec<usize>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    Sentiment,
    Regression,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "sentiment")]
    pub kind: SynthKind,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Size of the labelled pool; the test set has the same size.
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}
