use thiserror::Error;

pub type Result<T> = std::result::Result<T, GameError>;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is singular (pivot {pivot:e} in row {row})")]
    Singular { row: usize, pivot: f64 },

    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergent { iterations: usize, residual: f64 },

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("replay delay of {delay} steps exceeds stored history of {available}")]
    InsufficientHistory { delay: usize, available: usize },

    #[error("matrix game certificate failed (gap {gap:e})")]
    NumericalFailure { gap: f64 },

    #[error("history enumeration needs {required:.3e} nodes, budget is {budget}")]
    BudgetExceeded { required: f64, budget: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
