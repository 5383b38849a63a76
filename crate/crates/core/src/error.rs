//! Crate-wide error type.

/// Errors produced by model construction, fitting and scoring.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes of related inputs disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An input violates a structural invariant (ordering, emptiness, flags).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Training produced a non-finite loss; the message carries the
    /// iteration and sample where it surfaced.
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    /// The data cannot identify the requested parameters.
    #[error("unidentifiable: {0}")]
    Unidentifiable(String),

    /// A metric is undefined on this input (zero variance, empty support, ...).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("model document error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
