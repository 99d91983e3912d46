use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A covariance failed validation (asymmetric, non-SPD, or too
    /// ill-conditioned to trust).
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// Configuration text did not parse.
    #[error("parse error: {0}")]
    Parse(String),

    /// A parsed configuration violates a scenario invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// The solver evaluated a non-finite objective or constraint.
    #[error("numerical failure: {reason}")]
    NumericalFailure { reason: String, iterate: Vec<f64> },

    /// An API precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
