//! Convolutional autoencoder for MIMO-OFDM waveform design: a PAPR-reducing
//! encoder in front of a band-pass filter and RAPP amplifier, a channel, and
//! an unrolled projected-gradient decoder, trained jointly under an
//! augmented-Lagrangian objective.

pub mod check;
pub mod data;
mod error;
pub mod loss;
pub mod model;
pub mod signal;
pub mod train;

pub use data::{Batch, BatchGenerator, Example, SystemConfig};
pub use error::{CaeError, Result};
pub use loss::{total_loss, LagrangianState, LossTerms};
pub use model::{Activation, Cae, ChainConfig, Evaluation, Mode, ModelConfig};
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};
