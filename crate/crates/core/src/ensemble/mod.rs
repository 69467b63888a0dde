//! Epoch-wise boosted training and the three ways of using its snapshots.
//!
//! Random lineages used by [`train_convboost`], all derived from
//! `RngStream::new(seed)`:
//!
//! * `("init", 0)`: parameter initialization.
//! * `("epoch", k)` for epoch `k` (1-based), with children `("sampling", 0)`
//!   for R-Frame and `("shuffle", 0)` for the batch order.
//! * `("batch", b)` under the epoch stream for batch `b` (0-based), with
//!   children `("cdrop", 0)`, `("scale", 0)`, `("mixup", 0)`, `("rstar", 0)`
//!   and `("dropout", 0)`.

mod fusion;
mod store;

pub use fusion::{compress_average, compress_params, fuse_predict, fuse_scores, select_top_m, EnsembleSelection, SelectionMode};
pub use store::{EpochModel, EpochModelStore, EpochRecord, StoreIndex, INDEX_FILE};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::analysis::confusion_matrix;
use crate::augment::{mixup_batch, r_frame_star, scale_batch, MixupConfig, DEFAULT_SCALING_SIGMA};
use crate::backbone::{AdamState, Backbone, Cnn, CnnArchitecture, CnnConfig};
use crate::batch::{FrameBatch, MixedBatch};
use crate::data::{DatasetBundle, WindowConfig};
use crate::resilient::{c_drop, CDropConfig};
use crate::rng::RngStream;
use crate::sampling::{common_shape, frame_split, r_frame_epoch, FrameSet, RFrameOptions};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoosterSwitches {
    /// Random per-epoch offset before framing.
    pub r_frame: bool,
    /// Bootstrap resampling of each epoch's frame pool.
    pub bootstrap: bool,
    pub mixup: bool,
    pub c_drop: bool,
    /// Extra mixed batch per step; needs `r_frame`.
    pub r_frame_star: bool,
    pub scaling: bool,
}

impl BoosterSwitches {
    /// R-Frame (offset and bootstrap), mix-up and C-Drop.
    pub fn convboost() -> Self {
        Self {
            r_frame: true,
            bootstrap: true,
            mixup: true,
            c_drop: true,
            r_frame_star: false,
            scaling: false,
        }
    }

    /// Epoch-wise bagging without boosters: fixed framing, bootstrap only.
    pub fn bagging() -> Self {
        Self {
            bootstrap: true,
            ..Self::off()
        }
    }

    pub fn off() -> Self {
        Self {
            r_frame: false,
            bootstrap: false,
            mixup: false,
            c_drop: false,
            r_frame_star: false,
            scaling: false,
        }
    }
}

impl Default for BoosterSwitches {
    fn default() -> Self {
        Self::convboost()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRunConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub boosters: BoosterSwitches,
    pub mixup: MixupConfig,
    pub c_drop: CDropConfig,
    pub scaling_sigma: f64,
    pub window: WindowConfig,
    pub architecture: CnnArchitecture,
    pub learning_rate: f64,
    pub seed: u64,
    /// Ensemble size `M`.
    pub ensemble_size: usize,
}

impl TrainRunConfig {
    pub fn new(window: WindowConfig, seed: u64) -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            boosters: BoosterSwitches::default(),
            mixup: MixupConfig::default(),
            c_drop: CDropConfig::default(),
            scaling_sigma: DEFAULT_SCALING_SIGMA,
            window,
            architecture: CnnArchitecture::default(),
            learning_rate: 1e-3,
            seed,
            ensemble_size: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.ensemble_size == 0 || self.ensemble_size > self.epochs {
            return bad(format!(
                "ensemble size must lie in [1, epochs = {}], got {}",
                self.epochs, self.ensemble_size
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.boosters.r_frame_star && !self.boosters.r_frame {
            return bad("r_frame_star requires r_frame".into());
        }
        if self.boosters.scaling && !(self.scaling_sigma.is_finite() && self.scaling_sigma > 0.0) {
            return bad(format!("scaling sigma must be positive, got {}", self.scaling_sigma));
        }
        self.mixup.validate()?;
        self.c_drop.validate()?;
        self.window.validate()
    }

    /// Network definition for the frames this config cuts from `data`.
    pub fn cnn_config(&self, data: &DatasetBundle) -> Result<CnnConfig> {
        let (shape, channels) = common_shape(&data.train, &self.window)?;
        CnnConfig::new(self.architecture.clone(), shape.length, channels, data.num_classes)
    }
}

/// Runs the epoch loop and stores every epoch's snapshot in memory.
pub fn train_convboost(data: &DatasetBundle, cfg: &TrainRunConfig) -> Result<EpochModelStore> {
    let mut store = EpochModelStore::in_memory("", cfg.seed);
    train_convboost_into(data, cfg, &mut store)?;
    Ok(store)
}

/// Per epoch: sampling, shuffling, batches of `batch_size` (short last
/// batch kept), per batch C-Drop, scaling, mix-up (or a `λ = 1` wrapper),
/// R-Frame*, one optimizer step; then the snapshot is scored by mean F1 on
/// the validation frames and appended to `store`.
///
/// `data` is used as given; normalize it beforehand.
pub fn train_convboost_into(data: &DatasetBundle, cfg: &TrainRunConfig, store: &mut EpochModelStore) -> Result<()> {
    cfg.validate()?;
    if !store.is_empty() {
        return Err(Error::Config("training needs an empty store".into()));
    }
    if data.train.is_empty() {
        return Err(Error::Empty("no training sequences".into()));
    }
    let cnn = Cnn::new(cfg.cnn_config(data)?)?;
    let validation = frame_split(&data.validation, &cfg.window)?;
    if validation.is_empty() {
        return Err(Error::Empty("no validation frames".into()));
    }
    let validation_labels = validation.labels();

    let root = RngStream::new(cfg.seed);
    let mut params = cnn.init_params(&mut root.derive("init", 0))?;
    let mut adam = AdamState::new(params.flat_view().len(), cfg.learning_rate);
    let b = cfg.boosters;
    let fixed = if b.r_frame || b.bootstrap {
        None
    } else {
        let set = frame_split(&data.train, &cfg.window)?;
        if set.is_empty() {
            return Err(Error::Empty("every training sequence is shorter than one window".into()));
        }
        Some(set)
    };

    for epoch in 1..=cfg.epochs {
        let erng = root.derive("epoch", epoch as u64);
        let set = match &fixed {
            Some(set) => set.clone(),
            None => {
                let options = RFrameOptions {
                    random_offset: b.r_frame,
                    bootstrap: b.bootstrap,
                };
                r_frame_epoch(&data.train, &cfg.window, &mut erng.derive("sampling", 0), options, epoch)?
            }
        };
        let loss = run_epoch(&cnn, cfg, &set, &erng, &mut params, &mut adam).map_err(|e| match e {
            Error::Divergence { batch, loss, .. } => Error::Divergence { epoch, batch, loss },
            other => other,
        })?;
        let eval = cnn.evaluate(&params, &validation)?;
        let f1 = confusion_matrix(&eval.predictions, &validation_labels, data.num_classes)?.mean_f1();
        log::debug!("epoch {epoch}: loss {loss:.4}, validation F1 {f1:.4}");
        store.push(EpochModel {
            epoch,
            params: params.clone(),
            validation_f1: f1,
            train_loss: loss,
        })?;
    }
    Ok(())
}

/// Trains over one epoch's frames and returns the frame-weighted mean loss.
fn run_epoch(
    cnn: &Cnn,
    cfg: &TrainRunConfig,
    set: &FrameSet,
    erng: &RngStream,
    params: &mut crate::backbone::ModelParams,
    adam: &mut AdamState,
) -> Result<f64> {
    let b = cfg.boosters;
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut erng.derive("shuffle", 0));
    let (mut total, mut frames) = (0.0, 0usize);
    for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let brng = erng.derive("batch", bi as u64);
        let mut batch = FrameBatch::from_frames(chunk.iter().map(|&i| &set.frames[i]), set.length, set.channels)?;
        if b.c_drop {
            c_drop(&mut batch, &cfg.c_drop, &mut brng.derive("cdrop", 0))?;
        }
        if b.scaling {
            scale_batch(&mut batch, cfg.scaling_sigma, &mut brng.derive("scale", 0))?;
        }
        let mut step = vec![if b.mixup {
            mixup_batch(&batch, &cfg.mixup, &mut brng.derive("mixup", 0))?
        } else {
            MixedBatch::degenerate(batch.clone())
        }];
        if b.r_frame_star {
            step.push(r_frame_star(&batch, &cfg.mixup, &mut brng.derive("rstar", 0))?);
        }
        let loss = cnn
            .train_step(params, adam, &step, &mut brng.derive("dropout", 0))
            .map_err(|e| match e {
                Error::Divergence { loss, .. } => Error::Divergence { epoch: 0, batch: bi, loss },
                other => other,
            })?;
        total += loss * batch.len() as f64;
        frames += batch.len();
    }
    Ok(total / frames as f64)
}
