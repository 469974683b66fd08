//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors surfaced by the audit pipeline.
///
/// The split matters for exit codes: configuration problems (bad manifest
/// keys, mismatched dimensions, impossible parameter combinations) are
/// distinguished from data problems (empty logs, malformed rows in strict
/// mode, infeasible filters).
#[derive(Debug, Error)]
pub enum Error {
    /// The run is misconfigured: wrong dimensions, wrong mode for the
    /// available columns, invalid parameter ranges.
    #[error("configuration error: {0}")]
    Config(String),

    /// The input data cannot support the requested operation.
    #[error("data error: {0}")]
    Data(String),

    /// An internal contract was violated by the caller (non-normalized
    /// distribution, membership mismatch, out-of-range age).
    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit status: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
