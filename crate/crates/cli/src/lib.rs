//! Command-line front end for `labeldist`: evaluation, calibration sweeps,
//! budget simulations, synthetic data generation, training and the human
//! agreement baseline. Every command is a pure function of its config and
//! input files and writes its results into an output directory.

pub mod calib;
pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Failure of a command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input files, flags or config (exit code 1).
    #[error("{0}")]
    Input(String),
    /// A broken internal invariant (exit code 2).
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<labeldist::Error> for CliError {
    fn from(e: labeldist::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "labeldist",
    version,
    about = "Label-distribution calibration toolkit"
)]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predictions against human label distributions.
    Evaluate(DataArgs),
    /// Score predictions at every value of a calibration grid.
    Sweep(DataArgs),
    /// Compare annotation budget plans by training and evaluating models.
    Simulate(DataArgs),
    /// Write a synthetic world as annotation, feature and true-distribution files.
    GenSynthetic,
    /// Train a classifier: single-vote records first, then multi-vote records.
    Train(DataArgs),
    /// Estimate human agreement by scoring split halves of the votes.
    HumanBaseline(DataArgs),
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// `none`, `temp:<s>|auto`, `pred:<alpha>|auto[:literal|standard]`, `train:<alpha>`.
    #[arg(long)]
    pub calib: Option<String>,
    /// Run plans that break the budget identity, with a warning.
    #[arg(long)]
    pub no_validate: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            return Err(CliError::Input(
                e.render().to_string().trim_end().to_string(),
            ))
        }
    };
    commands::dispatch(cli)
}
