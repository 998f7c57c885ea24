//! `churn`: LRU hit-ratio simulation, trace randomization and box-model
//! prediction from request traces.
//!
//! Data (CSV/JSON) goes to `--out` or stdout; diagnostics go to stderr.
//! Exit codes: 0 success, 1 validation failure, 2 usage error, 3 I/O or
//! parse error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use churn_core::che::Psi2Form;
use churn_core::grid::GridSpec;

#[derive(Parser, Debug)]
#[command(name = "churn", version, about = "LRU hit ratios under catalog churn")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact LRU hit-ratio curve of a trace.
    Simulate(SimulateArgs),
    /// Randomize a trace; `all` compares the curves of all three randomizations.
    Shuffle(ShuffleArgs),
    /// Predicted hit-ratio curve (box model or classic IRM Che).
    Predict(PredictArgs),
    /// Synthetic box-model trace.
    Generate(GenerateArgs),
    /// Monte Carlo check of the distinct-document mean function.
    ValidatePsi(ValidatePsiArgs),
    /// Per-document lifespan and rate estimates.
    Estimate(EstimateArgs),
    /// Catalog counts of a trace as JSON.
    Stats(StatsArgs),
    /// Busiest sub-window of a given duration, re-based to start at 0.
    Subtrace(SubtraceArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
pub struct TraceInput {
    /// Trace CSV (`timestamp_ms,doc_id[,user_id]`).
    pub trace: PathBuf,
    /// Observation window in ms; defaults to the largest timestamp.
    #[arg(long)]
    pub window_ms: Option<u64>,
    /// Merge repeat requests by the same user closer than this many ms
    /// (sessions; 480000 is a common choice). Needs a user column.
    #[arg(long)]
    pub gap_ms: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Output file; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: TraceInput,
    /// Cache-size grid: log|lin|rlog:<min>:<max>:<count> or list:<c1>,<c2>,...
    #[arg(long, default_value = "log:1:max:40")]
    pub sizes: GridSpec,
    #[command(flatten)]
    pub output: Output,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShuffleKind {
    Global,
    Positional,
    Local,
    All,
}

#[derive(Args, Debug)]
pub struct ShuffleArgs {
    #[command(flatten)]
    pub input: TraceInput,
    #[arg(long, value_enum)]
    pub kind: ShuffleKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid for `--kind all`.
    #[arg(long, default_value = "log:1:max:40")]
    pub sizes: GridSpec,
    #[command(flatten)]
    pub output: Output,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Box,
    Classic,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: TraceInput,
    #[arg(long, value_enum, default_value = "box")]
    pub method: Method,
    #[arg(long, default_value = "log:1:max:40")]
    pub sizes: GridSpec,
    /// Only documents with at least this many requests supply (lambda, tau) pairs.
    #[arg(long, default_value_t = 2)]
    pub min_requests: u64,
    /// Estimable part of the mean function: occupancy or multi-request.
    #[arg(long, default_value = "occupancy")]
    pub psi: Psi2Form,
    /// Metadata JSON for the box method; defaults to `<out>.meta.json`.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug, Clone)]
pub struct GeneratorArgs {
    /// JSON `{gamma, window_ms, warmup_ms, pairs: [[lambda, tau], ...]}`.
    #[arg(long, conflicts_with_all = ["gamma", "lambda", "tau"])]
    pub config: Option<PathBuf>,
    /// Catalog arrival rate, documents per ms.
    #[arg(long, required_unless_present = "config")]
    pub gamma: Option<f64>,
    #[arg(long, required_unless_present = "config")]
    pub window_ms: Option<u64>,
    /// Request rate per ms of every document.
    #[arg(long, required_unless_present = "config")]
    pub lambda: Option<f64>,
    /// Lifespan in ms of every document.
    #[arg(long, required_unless_present = "config")]
    pub tau: Option<f64>,
    #[arg(long)]
    pub warmup_ms: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct ValidatePsiArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Times in ms; defaults to ten evenly spaced points up to the window.
    #[arg(long, value_delimiter = ',')]
    pub t_ms: Vec<u64>,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest acceptable |z|.
    #[arg(long, default_value_t = 3.0)]
    pub max_z: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: TraceInput,
    #[arg(long, default_value_t = 2)]
    pub min_requests: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: TraceInput,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct SubtraceArgs {
    #[command(flatten)]
    pub input: TraceInput,
    #[arg(long)]
    pub duration_ms: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write to this path instead of the recorded one.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli, &argv) {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::ValidationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
