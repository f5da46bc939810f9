use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure reported by a utility oracle.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct OracleError {
    pub message: String,
}

impl OracleError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("exact enumeration over {n} players exceeds the cap of {cap}; use the Monte Carlo estimator")]
    Capacity { n: usize, cap: usize },
    #[error("utility oracle failed on coalition {coalition}: {source}")]
    Oracle { coalition: String, source: OracleError },
    #[error("utility oracle failed in permutation {permutation} on prefix {prefix}: {source}")]
    OracleInPermutation { permutation: usize, prefix: String, source: OracleError },
    #[error("inconsistent input: {0}")]
    Consistency(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("kernel matrix not positive definite after jitter escalation to {jitter:e}")]
    Conditioning { jitter: f64 },
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}
