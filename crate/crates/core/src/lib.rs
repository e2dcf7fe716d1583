//! Core pipeline for bio-adaptive pentatonic music generation.
//!
//! Stages, in pipeline order:
//!
//! - [`radar`]: synthetic chest displacement and radar phase signals.
//! - [`vitals`]: heart/respiration rate estimation (periodogram and subspace).
//! - [`state`]: discretization of vitals into tokens with hysteresis.
//! - [`planner`]: rule-based music planner with an explicit reasoning trace.
//! - [`pentatonic`]: the five Chinese pentatonic modes, tonal embeddings and
//!   a mode/tonic classifier.
//! - [`melody`]: mode-conditioned symbolic melody generators.
//! - [`audio`]: 44.1 kHz synthesis, WAV I/O and crossfading.

pub mod audio;
pub mod error;
pub mod melody;
pub mod pentatonic;
pub mod planner;
pub mod radar;
pub mod state;
pub mod vitals;

mod rng;

pub use error::{Error, Result};
