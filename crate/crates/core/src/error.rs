use thiserror::Error;

/// Errors produced by the simulator and the analysis evaluators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite entry at index {index} in {context}")]
    NonFinite { context: &'static str, index: usize },

    #[error("matrix is singular: pivot {pivot} has magnitude {magnitude:e}")]
    Singular { pivot: usize, magnitude: f64 },

    #[error("matrix is not positive semidefinite (column {column})")]
    NotPsd { column: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("precondition violated: {condition}")]
    ConditionViolated { condition: &'static str },

    #[error("iteration diverged at step {step}")]
    Divergence { step: u64 },

    #[error("requested limit does not exist: {0}")]
    Unstable(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
