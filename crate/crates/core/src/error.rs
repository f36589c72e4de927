//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, inference, and the evaluation
/// harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix did not have the expected dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A scalar or structural parameter was outside its legal range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An operation that requires data received none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A matrix that must be symmetric positive-definite was not.
    #[error("matrix not positive-definite: {0}")]
    NotPositiveDefinite(String),

    /// An input contained NaN or infinite coordinates.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// A dataset file could not be parsed.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn empty(msg: impl Into<String>) -> Self {
        Error::EmptyInput(msg.into())
    }

    pub fn dataset(msg: impl Into<String>) -> Self {
        Error::Dataset(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
