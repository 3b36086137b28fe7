use thiserror::Error;

/// Errors raised across the processing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("no spectral peak above cutoff")]
    NoPeak,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("labeling error: {0}")]
    Labeling(String),
    #[error("unknown model configuration: {0}")]
    UnknownConfig(String),
    #[error("latency budget exceeded: {0}")]
    Latency(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
