//! Crate-wide error type and process exit-code mapping.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad shapes, out-of-range hyperparameters, malformed swap lists, etc.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A loss or intermediate value became non-finite. `step` is the
    /// optimization step or epoch at which it was detected.
    #[error("numerical failure at step {step}: {message}")]
    NumericalFailure { step: usize, message: String },

    /// File-system or decode failure, always carrying the offending path.
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },

    /// Malformed container file (bad magic, truncated payload, ...).
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    /// Process exit code for the CLI: 2 usage, 3 i/o, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::NumericalFailure { .. } => 4,
        }
    }
}
