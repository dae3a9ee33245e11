use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function (e.g. `f(x)` for `x <= 0`).
    #[error("domain error: {0}")]
    Domain(String),
    /// Matrix or vector dimensions do not agree.
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    /// A symmetric factorization failed, i.e. the matrix is not positive definite.
    #[error("decomposition failed: {0}")]
    Decomposition(String),
    /// A constructed value violates its invariants.
    #[error("validation failed: {0}")]
    Validation(String),
    /// An integer or real argument is out of its admissible range.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A condition that the theory rules out (e.g. a bracket without a sign change).
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
