//! Library side of the `latentslam` command-line tool.
//!
//! Exit codes: 0 on success, 1 for runtime and I/O failures, 2 for invalid
//! input (bad flags or config, missing files, shape mismatches).

pub mod args;
pub mod commands;
pub mod config;
pub mod plot;

use std::ffi::OsString;
use std::fmt;

pub use args::Cli;

#[derive(Debug)]
pub enum Failure {
    /// Rejected command line; clap prints it and picks the exit code.
    Usage(clap::Error),
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn validation(msg: impl fmt::Display) -> Self {
        Failure::Validation(anyhow::anyhow!("{msg}"))
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(e) => e.exit_code() as u8,
            Failure::Validation(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "{e}"),
            Failure::Validation(e) | Failure::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<latentslam_core::Error> for Failure {
    fn from(e: latentslam_core::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Parses `argv` (program name first) and runs the selected command.
pub fn run(argv: Vec<OsString>) -> CliResult<()> {
    let cli = config::parse_command_line(argv)?;
    commands::dispatch(&cli)
}
