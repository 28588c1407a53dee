//! Standard-library companion to `bee-core`: configuration, CSV/SVG/JSON
//! files, the remote critic scorer, and the `bee` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod formats;
pub mod output;
pub mod scorer;

use scorer::ScoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO_OR_CONFIG: i32 = 1;
    pub const NUMERICAL: i32 = 2;
    pub const DIVERGED: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Diverged(bee_core::Error),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Config(_) | CliError::Score(_) => exit::IO_OR_CONFIG,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Diverged(_) => exit::DIVERGED,
        }
    }
}

impl From<bee_core::Error> for CliError {
    fn from(e: bee_core::Error) -> Self {
        match e {
            bee_core::Error::Diverged { .. } => CliError::Diverged(e),
            bee_core::Error::NoRoot { .. }
            | bee_core::Error::Overflow { .. }
            | bee_core::Error::NonFinite(_)
            | bee_core::Error::FullyMasked => CliError::Numerical(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
