//! `traj-embed`: process spec → Lindblad embedding → trajectories → checks.
//!
//! Exit codes: 0 success, 1 invalid input, 2 statistical FAIL,
//! 3 non-erasing model, 4 non-convergence.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_SEED: u64 = 1729;

#[derive(Debug, Parser)]
#[command(name = "traj-embed", version, about = "Quantum trajectory embeddings of stochastic processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the Lindblad generator of a process spec.
    Embed(EmbedArgs),
    /// Sample quantum jump trajectories from a Lindblad model.
    Simulate(SimulateArgs),
    /// Test an event log against a process spec.
    Validate(ValidateArgs),
    /// Report classical and quantum memory costs of a process spec.
    Measures(MeasuresArgs),
    /// Recover a semi-Markov process from a Lindblad with erasing jumps.
    Reverse(ReverseArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PathwayArg {
    Auto,
    Analytic,
    Numeric,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Process spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Lindblad output (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Convergence report output (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Step ladder, decreasing with a constant ratio.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-2, 5e-3, 2.5e-3])]
    pub ladder: Vec<f64>,
    #[arg(long, value_enum, default_value_t = PathwayArg::Auto)]
    pub pathway: PathwayArg,
    /// Event rate for discrete-time (hmm) specs.
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    /// Relative eigenvalue cutoff for the memory rank.
    #[arg(long, default_value_t = 1e-10)]
    pub rank_tol: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Lindblad model (JSON).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Events per trajectory.
    #[arg(long, conflicts_with = "time", required_unless_present = "time")]
    pub events: Option<usize>,
    /// Duration of each trajectory.
    #[arg(long)]
    pub time: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub trajectories: usize,
    /// Event log output; `.csv` selects CSV, anything else JSON lines.
    #[arg(long)]
    pub out: PathBuf,
    /// State path output (CSV), single trajectory only.
    #[arg(long)]
    pub state_path: Option<PathBuf>,
    /// Time between state-path samples.
    #[arg(long, default_value_t = 0.01)]
    pub cadence: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Event log; `.csv` is read as CSV, anything else as JSON lines.
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Stats report output (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Event rate for discrete-time (hmm) specs.
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
}

#[derive(Debug, Args)]
pub struct MeasuresArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Machine-readable output (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReverseArgs {
    /// Lindblad model (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Extracted spec output (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// End of the dwell-density grid; chosen from the survival tail when absent.
    #[arg(long)]
    pub grid_max: Option<f64>,
    #[arg(long, default_value_t = 2001)]
    pub grid_points: usize,
    /// Erasing tolerance on σ₂/σ₁.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }

    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure::new(1, error)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Embed(a) => commands::embed(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Measures(a) => commands::measures(&a),
        Command::Reverse(a) => commands::reverse(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
