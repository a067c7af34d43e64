use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input has dimension {got}, expected {expected}")]
    InputShape { expected: usize, got: usize },

    #[error("non-finite value in layer {layer}")]
    NumericOverflow { layer: usize },

    #[error("points {first} and {second} are identical")]
    DuplicateInput { first: usize, second: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no acceptable projection direction: {0}")]
    DirectionSearch(String),

    #[error("no valid offset: {0}")]
    CompressionInfeasible(String),

    #[error("target bound {target} is below the number of points {n}")]
    InvalidTarget { target: u64, n: usize },

    #[error("architecture error: {0}")]
    Architecture(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("certificate error: {0}")]
    Certificate(String),

    #[error("approximation search failed: {0}")]
    ApproxSearch(String),

    #[error("transform stage {stage} exceeded its budget: deviation {deviation:e} >= {budget:e}")]
    TransformBudget { stage: usize, deviation: f64, budget: f64 },

    #[error("activation {0} cannot be evaluated exactly")]
    Inexact(String),

    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("malformed network: {0}")]
    Malformed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
