//! Command-line harness for `bernflow`: training, evaluation, sampling and
//! the error-bound, robustness, degree-sweep and conditioning experiments.
//!
//! Every experiment is a plain function in [`experiments`] returning a typed
//! report; [`commands`] wraps them with file output and the run manifest.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod output;

pub use config::{DatasetSpec, ExperimentConfig};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const NUMERIC: i32 = 2;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// A numeric failure reported without the underlying core error.
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] bernflow::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => exit::NUMERIC,
            CliError::Core(e) if e.is_numeric() => exit::NUMERIC,
            _ => exit::USAGE,
        }
    }
}
