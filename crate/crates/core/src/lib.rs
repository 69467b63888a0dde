//! Epoch-wise boosted ConvNet training for sensor-based human activity recognition.
//!
//! A training run cuts long multichannel recordings into frames, regenerates the
//! training frame set every epoch through three booster layers, and keeps every
//! per-epoch model as a candidate base classifier:
//!
//! * [`sampling`]: random-offset framing plus bootstrap resampling (R-Frame).
//! * [`resilient`]: per-batch channel zeroing (C-Drop).
//! * [`augment`]: mix-up virtual frames, the R-Frame* extra booster and scaling.
//!
//! The [`ensemble`] module runs the epoch loop and turns the resulting snapshot
//! store into Single-Best, score-fused Ensemble and parameter-averaged models.
//! [`analysis`] holds the metrics and diversity diagnostics.

pub mod analysis;
pub mod augment;
pub mod backbone;
pub mod batch;
pub mod data;
pub mod ensemble;
mod error;
pub mod model_file;
pub mod numeric;
pub mod resilient;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
