use thiserror::Error;

/// Errors raised by the signal-processing primitives.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("oversampling factor must be at least 1, got {0}")]
    Oversampling(usize),
    #[error("signal has zero power")]
    ZeroPower,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("pipeline stage {from:?} cannot advance to {to:?}")]
    Stage {
        from: crate::dsp::Stage,
        to: crate::dsp::Stage,
    },
    #[error("channel matrix is singular at subcarrier {0}")]
    Singular(usize),
    #[error("exhaustive search over {0} candidates exceeds the 2^20 guard")]
    SearchTooLarge(u64),
}

pub type Result<T> = std::result::Result<T, Error>;
