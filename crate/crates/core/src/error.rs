use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A diagonal matrix built from a channel vector has a zero entry and
    /// cannot be inverted.
    #[error("zero entry at index {index} of a diagonal that must be inverted")]
    SingularDiagonal { index: usize },

    #[error("normal matrix is rank deficient (condition number {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("degenerate link: |m - eps| = {0:e}")]
    DegenerateLink(f64),

    #[error("reference channel has zero norm")]
    ZeroNorm,

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("thread pool: {0}")]
    ThreadPool(String),
}
