use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("unsupported size: {0}")]
    UnsupportedSize(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("insufficient measurements: need at least {needed}, got {got}")]
    InsufficientMeasurements { needed: usize, got: usize },
    #[error("degenerate patterns: {0}")]
    DegeneratePatterns(String),
    #[error("numerical failure at iteration {iteration}: {detail}")]
    NumericalFailure { iteration: usize, detail: String },
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("insufficient size: {0}")]
    InsufficientSize(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("replay bundle error: {0}")]
    Replay(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
