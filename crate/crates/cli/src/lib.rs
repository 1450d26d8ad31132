//! `qjn`: capacity analysis, simulation and optimization of quantum Jackson
//! networks from the command line.
//!
//! Exit codes: 0 success, 1 input error, 2 validation failure or
//! infeasibility, 3 numerical failure at run time.

mod commands;
mod format;
mod sweep;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qjn_core::Error;

pub use format::{csv_preamble, sig6, spec_hash};

#[derive(Debug, Parser)]
#[command(name = "qjn", version, about = "Capacity of quantum Jackson networks with waiting-time-dependent erasures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a network spec: stability, reachability, topology.
    Validate { spec: PathBuf },
    /// Closed-form capacity per source with a per-route breakdown.
    Analyze(AnalyzeArgs),
    /// Monte Carlo capacity estimate with a batch-means confidence interval.
    Simulate(SimulateArgs),
    /// Capacity-maximizing rate or routing split.
    Optimize(OptimizeArgs),
    /// Capacity over a parameter grid, as CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub spec: PathBuf,
    /// Only this source (default: all).
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub spec: PathBuf,
    /// Emissions per source and replication.
    #[arg(long)]
    pub emissions: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replications: u64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Per-qubit trace of the first replication.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TopologyArg {
    Tandem,
    Parallel,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Optimize the rate of one source of this network instead of a built-in topology.
    #[arg(conflicts_with = "topology")]
    pub spec: Option<PathBuf>,
    #[arg(long, requires = "spec")]
    pub source: Option<String>,
    #[arg(long)]
    pub topology: Option<TopologyArg>,
    /// Number of queues in the tandem.
    #[arg(long, default_value_t = 1)]
    pub m: u32,
    /// Common service rate of a homogeneous topology.
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, requires = "mu2")]
    pub mu1: Option<f64>,
    #[arg(long, requires = "mu1")]
    pub mu2: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Fixed arrival rate for the heterogeneous split.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Param {
    #[value(alias = "λ")]
    Lambda,
    #[value(alias = "δ")]
    Delta,
    #[value(alias = "κ")]
    Kappa,
    #[value(alias = "μ")]
    Mu,
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lambda => "lambda",
            Self::Delta => "delta",
            Self::Kappa => "kappa",
            Self::Mu => "mu",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fig3,
    Fig5,
    Fig6,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    pub param: Option<Param>,
    /// Node whose service rate is swept (`--param mu`) or that receives
    /// probability delta (`--param delta`).
    #[arg(long)]
    pub node: Option<String>,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub to: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Add a simulated column at every feasible grid point.
    #[arg(long, requires = "seed")]
    pub simulate: bool,
    #[arg(long, default_value_t = 100_000)]
    pub emissions: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Syntax(_)
            | Error::Schema(_)
            | Error::Domain(_)
            | Error::UnknownSource(_)
            | Error::UnknownNode(_) => 1,
            Error::Cycle { .. } | Error::SingularRouting | Error::Unstable { .. } | Error::Infeasible(_) => 2,
            Error::ToleranceNotMet { .. } | Error::InsufficientData(_) => 3,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        // a closed stdout (`qjn ... | head`) ends the run quietly
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return Self { code: 0, message: String::new() };
        }
        Self::input(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Validate { spec } => commands::validate(spec, out),
        Command::Analyze(a) => commands::analyze(a, out),
        Command::Simulate(a) => commands::simulate(a, out, err),
        Command::Optimize(a) => commands::optimize(a, out),
        Command::Sweep(a) => sweep::sweep(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) if e.code == 0 => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}
