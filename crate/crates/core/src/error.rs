use thiserror::Error;

/// Errors raised by the testing pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("pair index out of range: {0}")]
    Index(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A column has zero empirical variance (or a variance-like quantity vanished).
    #[error("degenerate input: column {column} has zero variance")]
    DegenerateColumn { column: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A covariance formula hit a vanishing denominator.
    #[error("singular covariance: {0}")]
    Singular(String),

    /// Cholesky factorization failed even at the largest jitter.
    #[error("matrix is not positive semi-definite: {0}")]
    NotPsd(String),

    /// `I + rho * A` is not positive definite.
    #[error("correlation model not positive definite: |rho| = {rho} but admissible range is |rho| < {bound}")]
    NotPositiveDefinite { rho: f64, bound: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
