use thiserror::Error;

/// Errors raised anywhere in the decision loop or its components.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),

    #[error("unsupported design: {0}")]
    UnsupportedDesign(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("operation not supported by this model: {0}")]
    Unsupported(&'static str),

    #[error("model lacks required capability `{0}`")]
    CapabilityMismatch(String),

    #[error("gram matrix not positive definite even with jitter {jitter:e}")]
    Conditioning { jitter: f64 },

    #[error("degenerate data: {0}")]
    FitDegeneracy(String),

    #[error("user function failed at {point:?}: {reason}")]
    Evaluation { point: Vec<f64>, reason: String },

    #[error("candidate point {point:?} lies outside the parameter space")]
    ContractViolation { point: Vec<f64> },

    #[error("acquisition optimization failed: {0}")]
    OptimizationFailure(String),

    #[error("output variance is zero; sensitivity indices are undefined")]
    DegenerateVariance,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
