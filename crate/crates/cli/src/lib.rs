//! Driver for the thinphase experiments: `solve`, `weiss`, `diagnose`,
//! `cones` and `verify-exact`.
//!
//! Exit codes: 0 on success, 1 when a diagnostic falls outside its
//! tolerance (or a solver fails to converge), 2 on usage or configuration
//! errors.

pub mod checks;
pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use checks::Check;
pub use config::{Config, UsageError};

#[derive(Debug, Parser)]
#[command(
    name = "thinphase",
    version,
    about = "Thin one-phase free boundary laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize the energy for configured boundary data.
    Solve(Common),
    /// Weiss profile of a checkpointed solution.
    Weiss(WeissArgs),
    /// Free-boundary diagnostics of a checkpointed solution.
    Diagnose(CheckpointArgs),
    /// Cone searches from random equator traces.
    Cones(Common),
    /// Invariant battery on the closed-form solutions.
    VerifyExact(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file, or `default` for built-in values.
    #[arg(long, default_value = "default")]
    pub config: String,
    /// Output directory (overrides `out` and THINPHASE_OUT).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CheckpointArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
}

#[derive(Debug, Args)]
pub struct WeissArgs {
    #[command(flatten)]
    pub checkpoint: CheckpointArgs,
    /// Slit point, comma-separated.
    #[arg(long)]
    pub center: Option<String>,
    /// `start:step:stop` or a comma-separated list.
    #[arg(long)]
    pub radii: Option<String>,
}

/// How a command ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass,
    /// Names of the diagnostics outside tolerance.
    Fail(Vec<String>),
}

/// Command failure other than a diagnostic verdict.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Compute(String),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<thinphase_core::Error> for Failure {
    fn from(e: thinphase_core::Error) -> Self {
        use thinphase_core::Error as E;
        match e {
            E::NotConverged { .. } | E::ProjectionFailed(_) => Failure::Compute(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::Fail(names)) => {
            eprintln!("diagnostics outside tolerance: {}", names.join(", "));
            1
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Compute(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
