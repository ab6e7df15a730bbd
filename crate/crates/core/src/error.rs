//! Crate-wide error type.

/// Errors produced by estimation, selection, training, and bound checks.
///
/// Data-quality problems (a malformed record, a prompt with too few
/// responses) are reported as values, not errors, wherever the operation
/// is a batch over many records; these variants cover single-item
/// operations where the caller asked for something impossible.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument violated a precondition (non-finite number, shape
    /// mismatch, invalid distribution, out-of-range token).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The prompt cannot be estimated (fewer than two responses).
    #[error("prompt ineligible for estimation: {0}")]
    Ineligible(String),

    /// All responses carry the same reward, so no chosen/rejected pair exists.
    #[error("degenerate preference pair: {0}")]
    DegeneratePair(String),

    /// The response space is too large to enumerate exactly.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
