//! Library side of the `bbc` command: scenario runs, chain validation,
//! credit audits and fleet enrollment. Each command returns the text it
//! would print, or a [`CliError`] carrying the process exit status.

use std::fmt;

mod commands;
pub mod config;

pub use commands::{cmd_audit, cmd_enroll, cmd_run, cmd_validate, compare_golden, parse_credit_snapshot, RunRequest};
pub use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExitStatus {
    Success,
    /// Usage or configuration error.
    Config,
    /// A chain store or registry failed validation.
    Validation,
    /// Audit or golden-output mismatch.
    Mismatch,
    Internal,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Config => 1,
            ExitStatus::Validation => 2,
            ExitStatus::Mismatch => 3,
            ExitStatus::Internal => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    pub fn new(status: ExitStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}
