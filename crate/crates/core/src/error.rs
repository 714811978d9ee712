use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("mode index {index} out of range for a {n_modes}-mode state")]
    ModeIndex { index: usize, n_modes: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid mode permutation {0:?}")]
    InvalidPermutation(Vec<usize>),

    #[error("matrix is not a valid covariance matrix: {0}")]
    InvalidMatrix(String),

    #[error("non-physical covariance matrix: smallest symplectic eigenvalue {min_eigenvalue}")]
    NonPhysical { min_eigenvalue: f64 },

    #[error("parameter estimation failed: {0}")]
    EstimationFailure(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("root not bracketed on [{lo}, {hi}]")]
    NotBracketed { lo: f64, hi: f64 },

    #[error("{0}")]
    Input(String),
}

/// Shorthand for a domain error with a formatted message.
pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
