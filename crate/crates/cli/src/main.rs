//! `linbp` command-line tool.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linbp_core::eval::Method;
use linbp_core::synth::Rounding;
use linbp_core::Variant;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "linbp", version, about = "Node classification with BP, LinBP and single-pass BP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infer beliefs with one method.
    Run(RunArgs),
    /// Report convergence thresholds for LinBP or LinBP*.
    Converge(ConvergeArgs),
    /// Generate a Kronecker graph and sampled explicit beliefs.
    Generate(GenerateArgs),
    /// Apply new explicit beliefs or edges to a stored SBP state.
    Update(UpdateArgs),
    /// Compare methods over a grid of coupling scales.
    Sweep(SweepArgs),
}

#[derive(Args, Serialize, Debug)]
pub struct RunArgs {
    /// bp, linbp, linbp_star or sbp.
    #[arg(long)]
    pub method: Method,
    /// Edge list TSV.
    #[arg(long)]
    pub graph: PathBuf,
    /// Explicit residual beliefs, `node TAB class TAB value`.
    #[arg(long)]
    pub beliefs: PathBuf,
    /// k, then the k×k coupling matrix.
    #[arg(long)]
    pub coupling: PathBuf,
    /// Scale of the centered coupling matrix.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon_h: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Measure convergence relative to each node's belief magnitude.
    #[arg(long)]
    pub relative_tol: bool,
    /// Solve LinBP directly instead of iterating.
    #[arg(long)]
    pub closed_form: bool,
    /// Largest n·k for a direct solve.
    #[arg(long, default_value_t = linbp_core::linbp::DEFAULT_DENSE_LIMIT)]
    pub dense_limit: usize,
    /// Relative tolerance for ties between top classes.
    #[arg(long, default_value_t = 0.0)]
    pub tie_tol: f64,
    /// Write beliefs as distributions instead of residuals.
    #[arg(long)]
    pub normalized: bool,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
pub struct ConvergeArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub coupling: PathBuf,
    /// linbp or linbp_star.
    #[arg(long, default_value = "linbp")]
    pub method: Variant,
    /// Scale at which the spectral radius is reported.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon_h: f64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Output prefix; the report goes to standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
pub struct GenerateArgs {
    /// Whitespace-separated 0/1 seed matrix; the built-in star when absent.
    #[arg(long)]
    pub seed_matrix: Option<PathBuf>,
    /// Kronecker power.
    #[arg(long)]
    pub power: u32,
    /// Share of nodes given explicit beliefs.
    #[arg(long, default_value_t = 0.05)]
    pub fraction: f64,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
    /// nearest or ceil.
    #[arg(long, default_value = "nearest")]
    pub rounding: Rounding,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[command(group(clap::ArgGroup::new("delta").required(true).args(["new_beliefs", "new_edges"])))]
pub struct UpdateArgs {
    /// Prefix of the state written by `run --method sbp`.
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long)]
    pub new_beliefs: Option<PathBuf>,
    #[arg(long)]
    pub new_edges: Option<PathBuf>,
    /// Also recompute from scratch and fail on any difference.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Args, Serialize, Debug)]
#[command(group(clap::ArgGroup::new("grid").required(true).args(["eps_log_grid", "eps"])))]
pub struct SweepArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub beliefs: PathBuf,
    #[arg(long)]
    pub coupling: PathBuf,
    /// `start,stop,points`, log-spaced.
    #[arg(long)]
    pub eps_log_grid: Option<String>,
    /// Explicit comma-separated scales.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "bp,linbp,linbp_star,sbp")]
    pub methods: Vec<Method>,
    /// Reference method for recall and precision.
    #[arg(long, default_value = "bp")]
    pub gt: Method,
    /// Node whose belief spread is reported.
    #[arg(long)]
    pub probe: Option<String>,
    /// Count nodes no explicit belief can reach.
    #[arg(long)]
    pub include_unlabeled: bool,
    #[arg(long, default_value_t = 0.0)]
    pub tie_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub relative_tol: bool,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Output prefix; the CSV goes to standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// How a command ended when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotConverged,
    VerifyMismatch,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => commands::run(a),
        Command::Converge(a) => commands::converge(a),
        Command::Generate(a) => commands::generate(a),
        Command::Update(a) => commands::update(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(2),
        Ok(Status::VerifyMismatch) => ExitCode::from(3),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
