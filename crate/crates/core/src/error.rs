use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state {0} is classified as both an error state and a goal state")]
    OverlappingTerminals(usize),

    #[error("transition row for state {state}, action {action} sums to {sum}")]
    BadTransitionRow { state: usize, action: usize, sum: f64 },

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("start distribution: {0}")]
    BadStartDistribution(String),

    #[error(
        "{what} did not converge within {iterations} iterations (residual {residual:e} at state {state})"
    )]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        state: usize,
    },

    #[error("linear solve failed: {0}")]
    Singular(&'static str),

    #[error("input has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("tank level {0} is not positive; concentration update undefined")]
    DomainFault(f64),

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("unsupported model format version {0}")]
    ModelVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
