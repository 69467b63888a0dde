//! Base learner: a small 1-D CNN with analytic backpropagation and Adam.
//!
//! Layer stack per conv layer: valid convolution (stride 1), group
//! normalization, ReLU, max-pooling. Then flatten, fully-connected ReLU
//! layers, inverted dropout before the output layer, linear, softmax.
//! Everything runs in `f64`.

mod adam;
mod cnn;
mod config;
mod params;

pub use adam::AdamState;
pub use cnn::{group_normalize, Cnn, GROUP_NORM_EPSILON};
pub use config::{CnnArchitecture, CnnConfig, ConvLayer, TensorSpec};
pub use params::ModelParams;

use crate::batch::MixedBatch;
use crate::data::ClassId;
use crate::rng::RngStream;
use crate::sampling::FrameSet;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; draws masks from the supplied stream.
    Train,
    Eval,
}

/// Class probabilities for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionScores(pub Vec<f64>);

impl PredictionScores {
    /// Index of the largest probability; ties go to the lowest class.
    pub fn argmax(&self) -> ClassId {
        argmax(&self.0)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn argmax(values: &[f64]) -> ClassId {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<ClassId>,
    pub scores: Vec<PredictionScores>,
}

/// What the training loop needs from a base learner.
pub trait Backbone {
    fn init_params(&self, rng: &mut RngStream) -> Result<ModelParams>;

    /// Scores for a stack of time-major `L x C` frames.
    fn forward(
        &self,
        params: &ModelParams,
        frames: &[f64],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<Vec<PredictionScores>>;

    /// One optimizer step on the mean mix-up loss over every frame of
    /// `batches`. Returns the loss before the update.
    fn train_step(
        &self,
        params: &mut ModelParams,
        adam: &mut AdamState,
        batches: &[MixedBatch],
        rng: &mut RngStream,
    ) -> Result<f64>;

    fn evaluate(&self, params: &ModelParams, frames: &FrameSet) -> Result<Evaluation>;
}
