//! Error type shared across the crate.

use std::io;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad hyperparameter or option value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Dataset columns and model variables do not line up.
    #[error("schema error: {0}")]
    Schema(String),

    /// Malformed caller input (evidence, proportions, orderings, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A structural precondition on a network or circuit was violated.
    #[error("structural error: {0}")]
    Structure(String),

    /// A path, variable, or node was not found where one was required.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// An internal bookkeeping invariant failed.
    #[error("internal consistency error: {0}")]
    Internal(String),

    /// A node handle was presented to a manager that does not own it.
    #[error("ownership error: {0}")]
    ForeignNode(String),

    /// A circuit grew past the configured maximum size.
    #[error("tractability bound exceeded: size {size} > maximum {limit}")]
    TractabilityBound { size: u64, limit: u64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Conditioning on an event of probability zero.
    #[error("undefined conditional: {0}")]
    UndefinedConditional(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI: 2 usage, 3 data, 4 tractability.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) => 2,
            Error::TractabilityBound { .. } => 4,
            _ => 3,
        }
    }
}
