//! Metrics and ensemble diagnostics.

mod diversity;
mod stats;

pub use diversity::{
    cosine_similarity, cosine_similarity_matrix, ensemble_qs, q_statistic_pair, CorrectnessVector, CosineReport,
    EnsembleQs, PairCounts, QStatistic,
};
pub use stats::{stars, t_test, SignificanceResult};

use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, Cnn};
use crate::data::ClassId;
use crate::ensemble::{EnsembleSelection, EpochModelStore};
use crate::sampling::FrameSet;
use crate::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// `2TP / (2TP + FP + FN)` per class; a zero denominator gives 0.
    pub fn per_class_f1(&self) -> Vec<f64> {
        let c = self.num_classes();
        (0..c)
            .map(|k| {
                let tp = self.counts[k][k];
                let fn_ = self.counts[k].iter().sum::<u64>() - tp;
                let fp = (0..c).map(|r| self.counts[r][k]).sum::<u64>() - tp;
                let denom = 2 * tp + fp + fn_;
                if denom == 0 {
                    0.0
                } else {
                    (2 * tp) as f64 / denom as f64
                }
            })
            .collect()
    }

    /// Unweighted mean of [`per_class_f1`](Self::per_class_f1) over all classes.
    pub fn mean_f1(&self) -> f64 {
        let f1 = self.per_class_f1();
        if f1.is_empty() {
            return 0.0;
        }
        f1.iter().sum::<f64>() / f1.len() as f64
    }
}

pub fn confusion_matrix(predictions: &[ClassId], labels: &[ClassId], num_classes: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &t) in predictions.iter().zip(labels) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::OutOfRange(format!(
                "class pair (true {t}, predicted {p}) for {num_classes} classes"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

pub fn mean_f1(cm: &ConfusionMatrix) -> f64 {
    cm.mean_f1()
}

pub fn per_class_f1(cm: &ConfusionMatrix) -> Vec<f64> {
    cm.per_class_f1()
}

/// Each selected member evaluated alone on `frames`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseF1 {
    pub members: Vec<f64>,
    pub mean: f64,
}

pub fn expected_base_f1(store: &EpochModelStore, sel: &EnsembleSelection, frames: &FrameSet) -> Result<BaseF1> {
    let labels = frames.labels();
    let mut members = Vec::with_capacity(sel.epochs.len());
    for &epoch in &sel.epochs {
        let params = store.load(epoch)?;
        let cnn = Cnn::new(params.config().clone())?;
        let eval = cnn.evaluate(&params, frames)?;
        members.push(confusion_matrix(&eval.predictions, &labels, params.config().num_classes)?.mean_f1());
    }
    if members.is_empty() {
        return Err(Error::Empty("empty selection".into()));
    }
    let mean = members.iter().sum::<f64>() / members.len() as f64;
    Ok(BaseF1 { members, mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_matrix() {
        let cm = confusion_matrix(&[0, 1, 1], &[0, 0, 1], 2).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn perfect_and_empty() {
        let cm = confusion_matrix(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        assert_eq!(cm.mean_f1(), 1.0);
        let empty = confusion_matrix(&[], &[], 3).unwrap();
        assert_eq!(empty.total(), 0);
        assert_eq!(empty.mean_f1(), 0.0);
        assert!(confusion_matrix(&[3], &[0], 3).is_err());
        assert!(confusion_matrix(&[0], &[], 3).is_err());
    }

    #[test]
    fn two_class_worked_example() {
        // class 0: TP 8, FP 2, FN 2 -> 0.8; class 1: TP 3, FP 1, FN 1 -> 0.75
        let cm = ConfusionMatrix {
            counts: vec![vec![8, 2], vec![2, 3]],
        };
        let f1 = cm.per_class_f1();
        assert!((f1[0] - 0.8).abs() < 1e-15);
        assert!((f1[1] - 0.6).abs() < 1e-15);
        let cm = ConfusionMatrix {
            counts: vec![vec![8, 1, 1], vec![1, 3, 0], vec![1, 0, 0]],
        };
        // class 0: TP 8, FP 2, FN 2; class 1: TP 3, FP 1, FN 1; class 2: TP 0, FP 1, FN 1
        let f1 = cm.per_class_f1();
        assert_eq!(f1, vec![0.8, 0.75, 0.0]);
    }

    #[test]
    fn absent_class_counts_as_zero() {
        let cm = confusion_matrix(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(cm.per_class_f1(), vec![1.0, 1.0, 0.0]);
        assert!((cm.mean_f1() - 2.0 / 3.0).abs() < 1e-15);
    }
}
