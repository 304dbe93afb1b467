//! Reverse-engineering of structured UI actions from screen recordings.
//!
//! The pipeline turns a screencast into a script of structured actions of the
//! form `[command] [widget] [location]`:
//!
//! 1. [`ingest`] decodes frame sources, drops adjacently-identical frames and
//!    normalizes fragments to a fixed length.
//! 2. [`vision`] computes per-pair structural-dissimilarity maps, finds change
//!    regions and assembles the three model input streams (original frames,
//!    cropped change regions, similarity maps).
//! 3. [`segment`] splits a full recording into per-action fragments from the
//!    mean-dissimilarity time series.
//! 4. [`nn`] is a small from-scratch tensor/layer library (3D convolution,
//!    3D max-pooling, dense, LSTM, cross-entropy) with hand-written backward
//!    passes and finite-difference checks.
//! 5. [`model`] is the three-encoder multi-task recognizer: command and widget
//!    classifier heads plus an LSTM location-phrase decoder.
//! 6. [`eval`] holds classification and unigram captioning metrics.
//! 7. [`synth`] generates seeded synthetic screencasts with ground-truth
//!    labels for training and evaluation.
//! 8. [`detect`] is a pluggable widget detector interface with a naive
//!    built-in implementation for synthetic UIs.
//! 9. [`pipeline`] wires everything into screencast -> action script.

pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod raster;
pub mod segment;
pub mod synth;
pub mod vision;

pub use error::{Error, Result};

/// Tool version stamped into provenance headers and scripts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
