use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Unreadable, malformed or inconsistent configuration.
    #[error("config: {0}")]
    Config(String),
    /// A check or a numeric routine failed.
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Signal(#[from] wavelab_core::Error),
    #[error(transparent)]
    Model(#[from] wavelab_cae::CaeError),
    #[error(transparent)]
    Autodiff(#[from] wavelab_autodiff::AdError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 1 for configuration problems, 2 for everything
    /// that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
