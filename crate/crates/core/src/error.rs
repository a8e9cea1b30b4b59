//! Error type shared by all modules of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("multiplier evaluation error: {0}")]
    MultiplierEvaluation(String),
    #[error("quadrature error: {0}")]
    Quadrature(String),
    #[error("bump resolution error: {0}")]
    BumpResolution(String),
    #[error("norm resolution error: {0}")]
    NormResolution(String),
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("calibration infeasible: {0}")]
    CalibrationInfeasible(String),
    #[error("internal invariant violation: {0}")]
    InternalInvariant(String),
    #[error("inconsistency: {0}")]
    Inconsistency(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialization(String),
}

impl From<serde_json::Error> for CoreError {
    fn from(e: serde_json::Error) -> Self {
        CoreError::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
