use thiserror::Error;

#[derive(Debug, Error)]
pub enum SoberError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("tanimoto kernel requires binary inputs, found {0}")]
    NonBinaryInput(f64),

    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),

    #[error("cholesky factorisation failed after jitter escalation (max jitter {jitter:e})")]
    Cholesky { jitter: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    #[error("recombination failed: {0}")]
    Recombination(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("oracle failed: {0}")]
    Oracle(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SoberError>;
