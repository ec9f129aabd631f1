//! Error type shared by the whole crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Matrix dimensions do not match what the operation requires.
    #[error("shape error: {0}")]
    Shape(String),

    /// A matrix that must have full (row) rank is numerically rank deficient.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// An input violated a symmetry contract.
    #[error("symmetry violation: {0}")]
    NotSymmetric(String),

    /// A matrix required to be positive semi-definite is not.
    #[error("not positive semi-definite: {0}")]
    NotPsd(String),

    /// The eigenvalue gap assumption `lambda_k > lambda_{k+1}` fails.
    #[error("no spectral gap: {0}")]
    NoGap(String),

    /// An internal consistency check failed (a proven inequality did not
    /// hold numerically).
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
