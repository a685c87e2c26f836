use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("node {node} references later node {input}")]
    Cycle { node: usize, input: usize },
    #[error("class index {index} out of range for {classes} classes")]
    Target { index: usize, classes: usize },
    #[error("batch normalization in training mode needs at least 2 samples per channel, got {0}")]
    BatchTooSmall(usize),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AdError>;
