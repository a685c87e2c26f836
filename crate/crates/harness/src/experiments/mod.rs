//! The harness subcommands as library functions. Each returns a [`Table`]
//! whose rendering is the subcommand's CSV output.
//!
//! [`Table`]: crate::csv::Table

pub mod acpr_obo;
pub mod ber;
pub mod ccdf;
pub mod gradcheck;
pub mod psd;
pub mod train;
