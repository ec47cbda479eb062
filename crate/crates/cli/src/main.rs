//! `ehjb`: condition checks, ergodic HJB solves and Monte-Carlo
//! verification driven by a TOML problem file.

mod output;
mod pipelines;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ehjb_core::pde::CapMode;
use ehjb_core::Error;
use serde::Serialize;

/// Exit code for a failed hypothesis or verification.
const EXIT_FAIL: u8 = 1;
/// Exit code for usage, configuration and parse errors.
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "ehjb", version, about = "Ergodic BSDE / ergodic HJB solver and verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the structural conditions and write conditions.json.
    Check(RunArgs),
    /// Solve for (λ, u, v) and write u.csv, v.csv, report.json.
    Solve(RunArgs),
    /// Control pipeline: H, α*, cost estimates and the weak/strong comparison.
    Control(RunArgs),
    /// Forward-performance pipeline.
    Forward(RunArgs),
    /// Solve, then verify along simulated paths.
    Simulate(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check(_) => "check",
            Command::Solve(_) => "solve",
            Command::Control(_) => "control",
            Command::Forward(_) => "forward",
            Command::Simulate(_) => "simulate",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Check(a) | Command::Solve(a) | Command::Control(a) | Command::Forward(a) | Command::Simulate(a) => a,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RunArgs {
    /// Problem file (TOML).
    #[arg(long)]
    #[serde(skip)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "ehjb-out")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Seed for condition sampling and simulation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid spacing.
    #[arg(long)]
    pub spacing: Option<f64>,
    /// First discount level.
    #[arg(long)]
    pub rho0: Option<f64>,
    /// Proceed even when the condition checks fail.
    #[arg(long)]
    pub force: bool,
    /// Truncation cap: auto, off or a positive value.
    #[arg(long, value_parser = parse_cap)]
    #[serde(serialize_with = "serialize_cap")]
    pub cap: Option<CapMode>,
    /// Write the simulated ensemble as CSV (simulate only).
    #[arg(long)]
    pub dump_paths: Option<PathBuf>,
}

fn parse_cap(s: &str) -> Result<CapMode, String> {
    s.parse::<CapMode>().map_err(|e| e.to_string())
}

fn serialize_cap<S: serde::Serializer>(cap: &Option<CapMode>, s: S) -> Result<S::Ok, S::Error> {
    match cap {
        Some(c) => s.serialize_some(&c.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    /// Verification could not be carried out (I/O on outputs, serialization).
    Failed(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Failed(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(Error::Parse { .. } | Error::Config(_) | Error::UnknownStrategy { .. }) => EXIT_USAGE,
            CliError::Core(_) | CliError::Failed(_) => EXIT_FAIL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("EHJB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("EHJB_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failed(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| pipelines::run(cli.command.name(), cli.command.args()));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
