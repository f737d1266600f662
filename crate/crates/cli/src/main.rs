//! `monocif`: simulate, train, predict, evaluate, importance and check, each
//! reading and writing plain files.
//!
//! Exit codes: 0 success, 1 I/O error, 2 configuration or input error,
//! 3 numeric failure, 4 invariant failure.

mod commands;
mod error;
mod grid;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use monocif::metrics::{NaiveRule, Variant};

use crate::error::Failure;

/// Environment variable read for the seed when `--seed` is absent.
pub const SEED_ENV: &str = "MONOCIF_SEED";

#[derive(Debug, Parser)]
#[command(name = "monocif", version, about = "Monotone cumulative-incidence models for sequential events")]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a simulated dataset with exact CIFs.
    Simulate(SimulateArgs),
    /// Fit a model on a dataset's train split with early stopping on val.
    Train(TrainArgs),
    /// Write predicted CIF surfaces.
    Predict(PredictArgs),
    /// Score predicted CIFs against observed trajectories.
    Evaluate(EvaluateArgs),
    /// Permutation feature importance.
    Importance(ImportanceArgs),
    /// Audit a model's monotonicity, anchoring and gradients.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (JSON). Mutually exclusive with --preset.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// sim-main, sim-lackprog, desk or desk-lackprog.
    #[arg(long, default_value = "sim-main")]
    pub preset: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `simulate` (or with the same files).
    #[arg(long)]
    pub data: PathBuf,
    /// Training config (JSON); defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delta_g: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Features CSV.
    #[arg(long, required_unless_present = "data", conflicts_with = "data")]
    pub features: Option<PathBuf>,
    /// Dataset directory; predicts for the subjects of --split.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
    /// Times as start:stop:step or a comma list.
    #[arg(long, default_value = "0:9:1")]
    pub t_grid: String,
    #[arg(long, default_value = "1:5:1")]
    pub grades: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted CIF CSV.
    #[arg(long)]
    pub cif: PathBuf,
    /// Dataset directory; its true_cif.csv is used when present.
    #[arg(long, required_unless_present = "trajectories", conflicts_with = "trajectories")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[arg(long, conflicts_with = "no_truth")]
    pub true_cif: Option<PathBuf>,
    /// Skip comparison with true CIFs even if available.
    #[arg(long)]
    pub no_truth: bool,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
    /// Defaults to the positive times in the CIF file.
    #[arg(long)]
    pub t_grid: Option<String>,
    /// Defaults to the grades in the CIF file.
    #[arg(long)]
    pub grades: Option<String>,
    #[arg(long, value_parser = parse_variant, default_value = "both")]
    pub variant: Variant,
    /// Censoring weights; `off` sets G = 1.
    #[arg(long, value_enum, default_value = "on")]
    pub ipcw: Switch,
    /// How the naive score reads a hit: `exact` or `at-least`.
    #[arg(long, value_parser = parse_naive_rule, default_value = "exact")]
    pub naive_rule: NaiveRule,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 50)]
    pub n_reps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "1:9:1")]
    pub t_grid: String,
    #[arg(long, default_value = "1:5:1")]
    pub grades: String,
    #[arg(long, value_enum, default_value = "on")]
    pub ipcw: Switch,
    /// Zero-based feature indices to permute (comma list); all by default.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write check.json and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

fn parse_naive_rule(s: &str) -> Result<NaiveRule, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result: Result<(), Failure> = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Importance(a) => commands::importance(&a),
        Command::Check(a) => commands::check(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
