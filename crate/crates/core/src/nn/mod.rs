//! Minimal reverse-mode automatic differentiation for 1D convolutional
//! networks, with the layer set the flow-pattern models need.
//!
//! A [`Tape`] records one forward pass as a flat list of nodes; each node owns
//! its output tensor and whatever the backward rule needs. Parameters live in a
//! [`ParamStore`] outside the tape and are copied in as leaves per step.

pub mod checkpoint;
pub mod kernels;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use layers::{BatchNorm1d, Conv1d, Dropout, Linear, Mode};
pub use optim::{AdamW, AdamWConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
