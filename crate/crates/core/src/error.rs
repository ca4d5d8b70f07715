use thiserror::Error;

use crate::optfact::DualState;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("matrix is not positive definite")]
    NotPd,
    #[error("rank-deficient: {0}")]
    RankDeficient(String),
    #[error("linear solver failed: relative residual {0:e}")]
    SolverFailure(f64),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("k = {k} exceeds the brute-force limit of {limit}; use the spectral bound or the nonnegative fast path")]
    TooLarge { k: usize, limit: usize },
    #[error("C^T C has entry {value:e} at ({i}, {j}) on a participation pair")]
    NonnegViolated { i: usize, j: usize, value: f64 },
    #[error("no convergence after {} iterations (relative gap {:e})", .0.iterations, .0.rel_gap)]
    NotConverged(Box<DualState>),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported workload: {0}")]
    UnsupportedWorkload(String),
    #[error("internal consistency check failed: {0}")]
    Internal(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
