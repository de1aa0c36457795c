use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A scalar argument lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// Two signals that must share a sampling clock do not.
    #[error("clock mismatch: {0}")]
    Clock(String),

    /// A surface or model state violates its invariants.
    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: String, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("retraction failed: element {index} is zero")]
    Retraction { index: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("search budget exceeded: {evaluations} evaluations > limit {limit}")]
    Budget { evaluations: u128, limit: u128 },

    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            found,
        }
    }
}
