//! Crate-wide error type.
//!
//! Variants map onto the CLI exit codes: `Config` -> 2, `Infeasible` -> 3,
//! `Diverged` -> 4, everything else -> 1.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range configuration (schema, units, bounds).
    #[error("config error: {0}")]
    Config(String),

    /// Input outside an operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested accuracy/precision combination admits no solution,
    /// e.g. the rounds model's denominator is not strictly positive.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A numeric routine failed to converge or produced no valid candidate.
    #[error("solver error: {0}")]
    Solver(String),

    /// The training simulation diverged (loss blow-up or non-finite state).
    #[error("diverged: {0}")]
    Diverged(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }
    pub fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
