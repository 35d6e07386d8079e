use thiserror::Error;

use crate::grid::Symmetry;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("kernel is not {tag:?}: residual {residual:.3e}")]
    SymmetryViolation { tag: Symmetry, residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Takagi factorization failed: reconstruction residual {residual:.3e}")]
    TakagiFailed { residual: f64 },

    #[error("unsupported marginal order ({m}, {n})")]
    UnsupportedMarginal { m: usize, n: usize },

    #[error("tensor of {entries} entries exceeds the materialization limit")]
    TensorTooLarge { entries: usize },

    #[error("right-hand side assembly check failed: {what} = {value:.3e}")]
    Assembly { what: &'static str, value: f64 },

    #[error("step rejected at t = {t}: {monitor} = {value:.3e}")]
    StepRejected {
        t: f64,
        monitor: &'static str,
        value: f64,
    },

    #[error("trajectory error: {0}")]
    Trajectory(String),
}
