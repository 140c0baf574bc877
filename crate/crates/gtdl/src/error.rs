//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced while validating data, evaluating model functions or fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("no observed failures; the model parameters are unidentifiable")]
    NoFailures,

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("log-likelihood evaluation failed: {0}")]
    Evaluation(String),

    #[error("no cure fraction in proper regime (eta_alpha = {eta_alpha} >= 0)")]
    ProperRegime { eta_alpha: f64 },

    #[error("observed information is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
