use serde::{Deserialize, Serialize};

use super::EpochModelStore;
use crate::backbone::{argmax, Backbone, Cnn, Evaluation, ModelParams, PredictionScores};
use crate::numeric::{exact_mean, exact_sum};
use crate::sampling::FrameSet;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    SingleBest,
    Ensemble,
    Compressed,
}

impl SelectionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SelectionMode::SingleBest => "single_best",
            SelectionMode::Ensemble => "ensemble",
            SelectionMode::Compressed => "compressed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSelection {
    /// Selected epochs, best validation F1 first.
    pub epochs: Vec<usize>,
    pub mode: SelectionMode,
}

/// The `m` epochs with the highest validation F1; ties go to the earlier
/// epoch. `m = 1` is tagged single-best, larger `m` ensemble.
pub fn select_top_m(store: &EpochModelStore, m: usize) -> Result<EnsembleSelection> {
    if m == 0 || m > store.len() {
        return Err(Error::OutOfRange(format!(
            "cannot select {m} of {} snapshots",
            store.len()
        )));
    }
    let mut records: Vec<_> = store.records().iter().collect();
    records.sort_by(|a, b| {
        b.validation_f1
            .total_cmp(&a.validation_f1)
            .then(a.epoch.cmp(&b.epoch))
    });
    Ok(EnsembleSelection {
        epochs: records[..m].iter().map(|r| r.epoch).collect(),
        mode: if m == 1 {
            SelectionMode::SingleBest
        } else {
            SelectionMode::Ensemble
        },
    })
}

/// Per frame and class, the mean of the members' probabilities.
pub fn fuse_scores(members: &[Vec<PredictionScores>]) -> Result<Vec<PredictionScores>> {
    let Some(first) = members.first() else {
        return Err(Error::Empty("no members to fuse".into()));
    };
    if members.iter().any(|m| m.len() != first.len()) {
        return Err(Error::Shape("members scored different numbers of frames".into()));
    }
    let m = members.len() as f64;
    (0..first.len())
        .map(|i| {
            let classes = first[i].0.len();
            if members.iter().any(|s| s[i].0.len() != classes) {
                return Err(Error::Shape(format!("frame {i}: members disagree on class count")));
            }
            Ok(PredictionScores(
                (0..classes)
                    .map(|c| exact_sum(members.iter().map(|s| s[i].0[c])) / m)
                    .collect(),
            ))
        })
        .collect()
}

pub fn fuse_predict(store: &EpochModelStore, sel: &EnsembleSelection, frames: &FrameSet) -> Result<Evaluation> {
    let mut members = Vec::with_capacity(sel.epochs.len());
    for &epoch in &sel.epochs {
        let params = store.load(epoch)?;
        members.push(Cnn::new(params.config().clone())?.evaluate(&params, frames)?.scores);
    }
    let scores = fuse_scores(&members)?;
    Ok(Evaluation {
        predictions: scores.iter().map(|s| argmax(&s.0)).collect(),
        scores,
    })
}

/// Elementwise mean of the flat parameter views.
pub fn compress_params(models: &[ModelParams]) -> Result<ModelParams> {
    let Some(first) = models.first() else {
        return Err(Error::Empty("no models to average".into()));
    };
    if models.iter().any(|m| m.config() != first.config()) {
        return Err(Error::Mismatch("cannot average models of different configs".into()));
    }
    let len = first.flat_view().len();
    let mut column = vec![0.0; models.len()];
    let values = (0..len)
        .map(|i| {
            for (slot, m) in column.iter_mut().zip(models) {
                *slot = m.flat_view()[i];
            }
            exact_mean(&column).expect("nonempty")
        })
        .collect();
    ModelParams::from_flat(first.config().clone(), values)
}

pub fn compress_average(store: &EpochModelStore, sel: &EnsembleSelection) -> Result<ModelParams> {
    let models = sel.epochs.iter().map(|&e| store.load(e)).collect::<Result<Vec<_>>>()?;
    compress_params(&models)
}
