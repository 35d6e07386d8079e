use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Core(#[from] hfbflow::Error),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("occupation basis of {states} states exceeds the limit {limit}")]
    CutoffOverflow { states: usize, limit: usize },
    #[error("mass {mass:.3e} in the top occupation shells exceeds {bound:.1e}; raise the cutoff")]
    TailMass { mass: f64, bound: f64 },
    #[error("Krylov propagation did not converge (estimate {estimate:.3e} at step {step:.3e})")]
    Krylov { estimate: f64, step: f64 },
    #[error("marginal of order ({m}, {n}) is not supported (need m + n <= 4)")]
    UnsupportedOrder { m: usize, n: usize },
    #[error("vector belongs to a different occupation basis")]
    BasisMismatch,
}

pub type Result<T, E = OracleError> = std::result::Result<T, E>;
