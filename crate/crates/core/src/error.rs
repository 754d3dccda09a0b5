use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrushinError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("empty observation region: {0}")]
    EmptyRegion(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("under-resolved request: {0}")]
    UnderResolved(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("conjugate gradient stagnated in {what}: residual history tail {history:?}")]
    Stagnation {
        what: &'static str,
        history: Vec<f64>,
    },
    #[error("singular form: {0}")]
    Singular(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("overflow at recursion step {step}: {hint}")]
    Overflow { step: usize, hint: String },
    #[error("regime not reached: {0}")]
    RegimeNotReached(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("zero denominator with nonzero numerator in {0}")]
    ZeroDenominator(&'static str),
    #[error("unknown strategy `{name}` for {kind}; available: {available}")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, GrushinError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> GrushinError {
    GrushinError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
