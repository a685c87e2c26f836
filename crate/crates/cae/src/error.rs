use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaeError {
    #[error(transparent)]
    Signal(#[from] wavelab_core::Error),
    #[error(transparent)]
    Autodiff(#[from] wavelab_autodiff::AdError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error("checkpoint does not match the model: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CaeError>;
