//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by MDP construction, estimators, solvers and drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid count: {0}")]
    InvalidCount(String),

    #[error("probe count must be at least 1")]
    InvalidProbeCount,

    #[error("step index {index} out of range (horizon {horizon})")]
    IndexOutOfRange { index: usize, horizon: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trajectory space too large: {weighted_paths} weighted paths exceed cap {cap}")]
    CapExceeded { weighted_paths: u128, cap: u128 },

    #[error("matrix not symmetric: max asymmetry {max_asymmetry:.3e} exceeds {tol:.3e}")]
    NotSymmetric { max_asymmetry: f64, tol: f64 },

    #[error("exact solver requires dense Hessian access")]
    DenseAccessRequired,

    #[error("dimension {dim} exceeds exact-solver cap {cap}")]
    DimCapExceeded { dim: usize, cap: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("iteration limit {limit} exceeded in {context}")]
    MaxIterExceeded { context: String, limit: usize },

    #[error("mdp validation failed: {0}")]
    InvalidMdp(String),

    #[error("fixture i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("fixture parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
