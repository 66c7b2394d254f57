//! Multimodal affect recognition framework.
//!
//! The crate covers the full loop: dataset containers for word-aligned
//! text/audio/video feature sequences, model-agnostic fusion backbones
//! (early, late, hybrid) over three sequence encoders (mean-pool MLP,
//! bidirectional LSTM, transformer), a weighted multi-task training
//! objective, weak-label acquisition from cross-dataset labelers, the
//! imbalance-aware evaluation metrics, and an experiment harness for
//! grid searches and seed sweeps.
//!
//! All numerics are plain Rust: a small tape-based reverse-mode
//! autodiff engine ([`nn`]) backs the models, so gradients are exact
//! and every run is reproducible from its seed.

pub mod datamodel;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod trainer;
pub mod util;
pub mod weaklabel;

pub mod backbones;

pub use error::{Error, Result};
