use thiserror::Error;

/// Errors raised by the inference engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("slice sampler: log density is not finite at the current point ({0})")]
    SliceNonFinite(f64),
    #[error("leaf precision matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("imputation exceeded {cap} attempts without an accepted point")]
    ImputationCap { cap: usize },
    #[error("subject {subject}: {source}")]
    Subject { subject: usize, source: Box<Error> },
    #[error("replicate {replicate}: {source}")]
    Replicate { replicate: usize, source: Box<Error> },
    #[error("non-positive likelihood for subject {subject}")]
    NonPositiveLikelihood { subject: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed draw store: {0}")]
    Store(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
