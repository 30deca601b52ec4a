//! Flow pattern classification for gas/oil two-phase pipe flow from a single
//! capacitance sensor channel.
//!
//! The crate covers the whole pipeline: trace ingestion and a synthetic
//! generator, spectral analysis, sliding-window dataset construction, a small
//! reverse-mode autodiff engine with the 1D SENet and baseline models, and the
//! evaluation harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod domain;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod io;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod sweep;
pub mod synth;

pub use dataset::{DatasetSplit, SplitManifest, SplitProtocol, WindowSample, WINDOW_LEN};
pub use domain::{
    CapacitanceTrace, EnvelopeRow, Experiment, FlowPattern, PatternEnvelope, Range, Violation,
    NUM_CLASSES,
};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use nn::Tensor;
