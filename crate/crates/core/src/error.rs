use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the model library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("bundle error: {0}")]
    Bundle(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub(crate) fn dims(expected: usize, got: usize, context: &'static str) -> Self {
        Error::DimensionMismatch {
            expected,
            got,
            context,
        }
    }

    /// True for failures caused by the numbers themselves (NaN, divergence).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }

    /// True for failures caused by missing or unusable input data.
    pub fn is_data(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Data(_) | Error::Bundle(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
