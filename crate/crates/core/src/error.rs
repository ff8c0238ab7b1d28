//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector or matrix dimensions do not match.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The implicit integrator could not continue.
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    /// A Newton iteration did not converge.
    #[error("Newton iteration failed to converge at step {step}: {reason}")]
    Newton { step: usize, reason: String },

    /// The feasible set of the estimation problem is empty.
    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed data file.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
