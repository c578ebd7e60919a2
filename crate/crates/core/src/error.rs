use thiserror::Error;

/// Errors raised by the optimizers, the pre-conditioner evaluators and the
/// adaptivity meter.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An invalid hyperparameter or region.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite gradient at step {step}, coordinate {coordinate}: {value}")]
    NonFinite {
        step: u64,
        coordinate: usize,
        value: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The optimizer was driven with an out-of-sequence step index.
    #[error("state error: {0}")]
    State(String),
}

pub type Result<T> = std::result::Result<T, OptimError>;
