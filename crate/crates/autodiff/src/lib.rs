//! A small reverse-mode automatic differentiation engine.
//!
//! Values live on a [`Tape`]; every operation appends a node holding its
//! output and a backward closure. Node inputs always precede the node, so the
//! tape order is a topological order and [`Tape::backward`] is a single
//! reverse sweep.
//!
//! The engine covers exactly what the autoencoder needs: element-wise
//! arithmetic, 2-D convolution, batch normalization, fully connected layers,
//! SELU/GELU, softmax and negative log-likelihood, plus [`AdamW`]. Other
//! crates add domain operations through [`Tape::push_op`].

mod checkpoint;
mod error;
pub mod gradcheck;
mod nn;
mod ops;
mod optim;
mod params;
mod tape;

pub use checkpoint::{read_checkpoint, write_checkpoint, NamedTensor};
pub use error::{AdError, Result};
pub use nn::{BatchNormMode, BatchStats, SELU_ALPHA, SELU_LAMBDA};
pub use optim::{AdamW, AdamWConfig};
pub use params::{BoundParams, ParamId, ParamStore};
pub use tape::{BackwardContext, GradSink, Gradients, Tape, Var};
