use thiserror::Error;

/// Errors raised by the numerical kernels and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix that must be Schur stable has spectral radius >= 1.
    #[error("unstable closed loop: spectral radius {radius} >= 1")]
    Unstable { radius: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("Riccati recursion did not converge after {iterations} iterations (system not stabilizable?)")]
    NotStabilizable { iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
