//! Multilayer perceptrons with exact backpropagation, Adam and Polyak averaging.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{AdamConfig, OptimizerState};
pub use checkpoint::Checkpoint;
pub use mlp::{polyak_update, ForwardCache, Gradients, Layer, Mlp, OutputActivation};
