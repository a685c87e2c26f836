//! Signal-level building blocks for MIMO-OFDM waveform experiments.
//!
//! * [`dsp`]: oversampled IDFT/DFT, power normalization, PAPR and Welch PSD.
//! * [`qam`]: square QAM alphabets with Gray labelling.
//! * [`rf`]: band-pass filter, input back-off, RAPP amplifier, Bussgang
//!   gain, ACPR and OBO.
//! * [`channel`]: per-subcarrier MIMO fading channels and AWGN.
//! * [`baselines`]: clipping and filtering, selected mapping, ML and ZF
//!   detection.

pub mod baselines;
pub mod channel;
pub mod dsp;
pub mod error;
pub mod qam;
pub mod rf;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Converts a power ratio in dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to dB.
pub fn linear_to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}
