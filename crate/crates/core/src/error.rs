use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum FlError {
    /// Two vectors (or a vector and a model) disagree on shape.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    /// A caller violated an operation precondition.
    #[error("invalid usage: {0}")]
    Usage(String),

    /// Malformed input data (CSV ingestion).
    #[error("ingestion error at row {row}, column `{column}`: {reason}")]
    Ingestion {
        row: usize,
        column: String,
        reason: String,
    },

    /// Config validation failure; `path` names the offending field.
    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Failure inside a round, with round context.
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<FlError>,
    },
}

impl FlError {
    pub fn usage(msg: impl Into<String>) -> Self {
        FlError::Usage(msg.into())
    }

    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        FlError::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FlError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, FlError>;
