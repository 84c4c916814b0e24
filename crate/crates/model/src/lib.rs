//! Transient transformer for fast-scan NLOS video reconstruction.
//!
//! [`graph::Graph`] records a forward pass over [`tensor::Tensor`]s and
//! differentiates it; [`network::TransientTransformer`] builds the model on
//! top, and [`train`] fits it in two stages.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod encoding;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod network;
pub mod params;
pub mod tensor;
pub mod train;

pub use config::ModelConfig;
pub use error::{ModelError, Result};
pub use graph::{Graph, Var};
pub use network::TransientTransformer;
pub use params::Params;
pub use tensor::Tensor;
pub use train::{LossTrace, TrainConfig};
