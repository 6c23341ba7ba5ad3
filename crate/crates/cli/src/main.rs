mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::settings::Failure;

/// Racing SAC toolkit: train, evaluate, refine, benchmark.
///
/// Every command accepts `--config FILE` (flat `key = value` lines) and
/// overrides as `--set key=value` or `--some.key=value`.
#[derive(Debug, Parser)]
#[command(name = "racesac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a SAC agent on the race car or a benchmark task.
    Train(TrainArgs),
    /// Drive a trained policy for a number of laps and report metrics.
    Eval(EvalArgs),
    /// Refine a trained policy online against a perturbed plant.
    Refine(RefineArgs),
    /// Regularizer benchmark cells on pendulum or mountaincar.
    Bench(BenchArgs),
    /// Track utilities.
    #[command(subcommand)]
    Track(TrackCommand),
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Base configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// race, pendulum or mountaincar.
    #[arg(long)]
    pub env: Option<String>,
    /// none, reward, weight or output.
    #[arg(long)]
    pub reg: Option<String>,
    /// Regularizer value: a scalar or a comma list of diagonal entries.
    #[arg(long)]
    pub value: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub laps: Option<usize>,
    /// Sample actions instead of driving the mean action.
    #[arg(long)]
    pub stochastic: bool,
    /// Simulation step budget.
    #[arg(long)]
    pub budget: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Checkpoint to start from.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Plant parameter perturbation magnitude (fraction).
    #[arg(long)]
    pub perturb: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Single-threaded fixed schedule instead of two threads.
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long)]
    pub reg: Option<String>,
    #[arg(long)]
    pub value: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// pendulum or mountaincar.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub reg: Option<String>,
    #[arg(long)]
    pub value: Option<String>,
    /// Run the full regularizer grid instead of one cell.
    #[arg(long)]
    pub grid: bool,
    /// Number of seeds, starting at `--seed`.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Evaluation episodes per trained policy.
    #[arg(long)]
    pub episodes: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Subcommand)]
pub enum TrackCommand {
    /// Write a generated layout as `x,y,half_width` CSV.
    Gen(TrackGenArgs),
    /// Print length, turn count and width statistics.
    Info(TrackInfoArgs),
}

#[derive(Debug, Args)]
pub struct TrackGenArgs {
    /// circle, oval or paper_like.
    #[arg(long, default_value = "paper_like")]
    pub kind: String,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0.2)]
    pub half_width: f64,
    /// Maximum centerline sample spacing [m].
    #[arg(long, default_value_t = 0.02)]
    pub ds: f64,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackInfoArgs {
    /// Track CSV; a generated layout when omitted.
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long, default_value = "paper_like")]
    pub kind: String,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0.2)]
    pub half_width: f64,
}

/// Moves `--dotted.key=value` arguments into `--set` overrides so clap only
/// sees declared flags.
fn split_dotted(args: Vec<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    for a in args {
        match a.strip_prefix("--").and_then(|r| r.split_once('=')) {
            Some((key, value)) if key.contains('.') => {
                out.push("--set".to_string());
                out.push(format!("{key}={value}"));
            }
            _ => out.push(a),
        }
    }
    out
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Refine(a) => commands::refine(a),
        Command::Bench(a) => commands::bench(a),
        Command::Track(TrackCommand::Gen(a)) => commands::track_gen(a),
        Command::Track(TrackCommand::Info(a)) => commands::track_info(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse_from(split_dotted(std::env::args().collect())) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
