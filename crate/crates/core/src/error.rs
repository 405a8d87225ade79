use thiserror::Error;

/// Errors raised across the handoff toolkit.
#[derive(Debug, Error)]
pub enum HandoffError {
    /// Input JSON does not match the expected schema (missing field, wrong type).
    #[error("schema error: {0}")]
    Schema(String),

    /// Input parsed but violates a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("inconsistent assignment: {0}")]
    InconsistentAssignment(String),

    #[error("missing external order score for hypothesis {0}")]
    MissingOrderScore(u64),

    #[error("layout overflow: {0}")]
    LayoutOverflow(String),

    #[error("empty input: {0}")]
    EmptyInput(String),
}

impl HandoffError {
    pub fn validation(msg: impl Into<String>) -> Self {
        HandoffError::Validation(msg.into())
    }
}

impl From<serde_json::Error> for HandoffError {
    fn from(err: serde_json::Error) -> Self {
        HandoffError::Schema(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HandoffError>;
