use thiserror::Error;

/// Errors raised while validating inputs or evaluating error surfaces.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unstable system: {0}")]
    UnstableSystem(&'static str),
    #[error("parameter `{0}` must be positive")]
    NonPositiveParameter(&'static str),
    #[error("cost matrix is not symmetric positive definite")]
    NonSpdCost,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("T/h = {ratio} is not an integer")]
    NonIntegerGrid { ratio: f64 },
    #[error("budget {budget} is smaller than one trajectory of {samples} samples")]
    BudgetTooSmall { budget: u64, samples: u64 },
    #[error("quadrature did not reach tolerance {tolerance:e}")]
    QuadratureFailure { tolerance: f64 },
    #[error("Lyapunov operator is singular")]
    SingularLyapunov,
    #[error("discounted tail diverges: {0}")]
    DivergentTail(&'static str),
    #[error("least-squares design is ill-conditioned (condition number {condition:e})")]
    IllConditionedFit { condition: f64 },
    #[error("no sign change of the stationarity condition in ({lo}, {hi})")]
    NoRootInInterval { lo: f64, hi: f64 },
    #[error("pilot budgets must contain at least two distinct values")]
    DegeneratePilot,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("no closed form available: {0}")]
    ClosedFormUnavailable(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
