use alloc::string::String;

/// Errors raised by estimators, matrix routines and samplers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("level error: {0}")]
    Level(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("not positive semidefinite: eigenvalue {eigenvalue:e} below -1e-6 * trace ({trace:e})")]
    NotPositiveSemidefinite { eigenvalue: f64, trace: f64 },
    #[error("singular covariance ({kind})")]
    SingularCovariance { kind: String },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("Hill requires positive tail: threshold order statistic is {threshold}")]
    NonPositiveTail { threshold: f64 },
    #[error("QB factor undefined for gamma_hat = {gamma}")]
    QbFactorUndefined { gamma: f64 },
    #[error("tail too heavy for LAWS variance in margin {margin} (gamma_hat = {gamma}); use QB")]
    TailTooHeavy { margin: usize, gamma: f64 },
    #[error("variance formula undefined for gamma = {gamma}")]
    VarianceUndefined { gamma: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
