use thiserror::Error;

/// Errors raised by problem construction, configuration and the solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown problem identifier `{0}` (expected one of ex1, ex2_call, ex3_spread, ex4)")]
    UnknownProblem(String),

    #[error("unknown scheme `{0}` (expected A, B, C, D or an explicit `theta1,theta2` pair)")]
    UnknownScheme(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate computational domain: {0}")]
    DegenerateDomain(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("backward step at time index {step} failed at grid row r = {row}: {reason}")]
    StepFailure {
        step: usize,
        row: i64,
        reason: String,
    },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("problem document: {0}")]
    Document(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        !matches!(self, Error::NonFinite(_) | Error::StepFailure { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
