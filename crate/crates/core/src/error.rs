use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value while evaluating {0}")]
    Evaluation(String),

    #[error("follower Hessian is singular or the solve did not converge (residual {residual:e})")]
    SingularFollowerHessian { residual: f64 },

    #[error("conjugate gradient breakdown: near-zero curvature {curvature:e} at iteration {iteration}")]
    IndefiniteOperator { curvature: f64, iteration: usize },

    #[error("operator of size {rows}x{cols} exceeds the dense cap {cap}")]
    SizeCap { rows: usize, cols: usize, cap: usize },

    #[error("eigenvalue iteration did not converge ({found} of {requested} values)")]
    EigenNonConvergence { found: usize, requested: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("follower best response did not reach tolerance (residual {residual:e} after {iterations} steps)")]
    FollowerNonConvergence { residual: f64, iterations: usize },

    #[error("no lock-in replica satisfied the conditioning event")]
    ConditioningFailure,

    #[error("operation requires joint dimension 2, got {0}")]
    UnsupportedDimension(usize),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
