//! Error taxonomy shared across the crate.
//!
//! The CLI maps variants to process exit codes: data errors exit 2,
//! protocol errors exit 3, verification failures exit 4, anything else 1.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or extent violation in a tensor operation or module contract.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Malformed or inconsistent input data (manifests, vocab, scores).
    #[error("data error: {0}")]
    Data(String),

    /// Violation of the benchmark protocol (e.g. unseen labels in train).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Non-finite values or numerically invalid state.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Broken internal contract (programmer error surfaced at runtime).
    #[error("contract error: {0}")]
    Contract(String),

    /// Checkpoint/config version or compatibility mismatch.
    #[error("version error: {0}")]
    Version(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Data(_) => 2,
            Error::Protocol(_) => 3,
            _ => 1,
        }
    }
}

/// Exit code signalling a failed verification run (grad check above tolerance).
pub const EXIT_VERIFICATION_FAILURE: i32 = 4;
