//! Crate-wide error type.
//!
//! Errors are grouped so the CLI can map them onto its exit codes:
//! configuration problems (exit 2), data problems (exit 3), and internal
//! invariant violations (exit 4).

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad fractions, unknown keys, method/task
    /// mismatch, missing files named by a config.
    #[error("config error: {0}")]
    Config(String),

    /// A record in an input file could not be parsed.
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: u64, message: String },

    /// Two documents share an id.
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    /// An operation that requires documents was given none.
    #[error("empty corpus")]
    EmptyCorpus,

    /// Any other problem with input data (insufficient authors, empty text,
    /// dimension mismatches between fitted artifacts and inputs, ...).
    #[error("data error: {0}")]
    Data(String),

    /// An internal invariant failed; indicates a bug, not bad input.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Invariant(_) => 4,
            _ => 3,
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}
