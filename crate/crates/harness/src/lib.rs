//! Seeded Monte Carlo experiments over the MIMO-OFDM link: BER curves, PAPR
//! CCDFs, PSD traces, ACPR/OBO tables, gradient checks and autoencoder
//! training. Every experiment is deterministic in its config and seed and
//! independent of the number of worker threads.

pub mod config;
pub mod csv;
mod error;
pub mod experiments;
pub mod link;
pub mod runner;
pub mod seeds;

pub use config::{load_config, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use runner::Runner;
