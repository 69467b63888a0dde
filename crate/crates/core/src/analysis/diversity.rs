use serde::{Deserialize, Serialize};

use crate::backbone::ModelParams;
use crate::data::ClassId;
use crate::{Error, Result};

/// Per-frame correctness of one classifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectnessVector(pub Vec<bool>);

impl CorrectnessVector {
    pub fn from_predictions(predictions: &[ClassId], labels: &[ClassId]) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        Ok(Self(predictions.iter().zip(labels).map(|(p, y)| p == y).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Joint correctness counts of two classifiers; `n10` is "a right, b wrong".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl PairCounts {
    pub fn count(a: &CorrectnessVector, b: &CorrectnessVector) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "correctness vectors of length {} and {}",
                a.len(),
                b.len()
            )));
        }
        let mut c = Self::default();
        for (&x, &y) in a.0.iter().zip(&b.0) {
            match (x, y) {
                (true, true) => c.n11 += 1,
                (true, false) => c.n10 += 1,
                (false, true) => c.n01 += 1,
                (false, false) => c.n00 += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QStatistic {
    pub value: f64,
    /// The denominator was zero and `value` was set to 0.
    pub degenerate: bool,
}

/// `(N11·N00 − N01·N10) / (N11·N00 + N01·N10)`.
pub fn q_statistic_pair(a: &CorrectnessVector, b: &CorrectnessVector) -> Result<QStatistic> {
    if a.is_empty() {
        return Err(Error::Empty("q-statistic of empty correctness vectors".into()));
    }
    let c = PairCounts::count(a, b)?;
    let same = c.n11 as f64 * c.n00 as f64;
    let diff = c.n01 as f64 * c.n10 as f64;
    let denom = same + diff;
    if denom == 0.0 {
        return Ok(QStatistic {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(QStatistic {
        value: (same - diff) / denom,
        degenerate: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleQs {
    /// Mean over all `M²` ordered pairs, diagonal included.
    pub all_pairs: f64,
    /// Mean over the `M(M−1)/2` unordered pairs `i < k`; `None` for `M = 1`.
    pub off_diagonal: Option<f64>,
    /// Ordered pairs (diagonal included) whose statistic was degenerate.
    pub degenerate_pairs: usize,
}

pub fn ensemble_qs(members: &[CorrectnessVector]) -> Result<EnsembleQs> {
    let m = members.len();
    if m == 0 {
        return Err(Error::Empty("ensemble q-statistic needs at least one member".into()));
    }
    let mut q = vec![vec![0.0; m]; m];
    let mut degenerate_pairs = 0;
    for i in 0..m {
        for k in i..m {
            let s = q_statistic_pair(&members[i], &members[k])?;
            q[i][k] = s.value;
            q[k][i] = s.value;
            if s.degenerate {
                degenerate_pairs += if i == k { 1 } else { 2 };
            }
        }
    }
    let total: f64 = q.iter().flatten().sum();
    let off: Vec<f64> = (0..m).flat_map(|i| (i + 1..m).map(move |k| (i, k))).map(|(i, k)| q[i][k]).collect();
    Ok(EnsembleQs {
        all_pairs: total / (m * m) as f64,
        off_diagonal: (!off.is_empty()).then(|| off.iter().sum::<f64>() / off.len() as f64),
        degenerate_pairs,
    })
}

/// `dot(a, b) / (‖a‖·‖b‖)`; `None` if either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(None);
    }
    Ok(Some(dot / (na * nb)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineReport {
    pub matrix: Vec<Vec<f64>>,
    /// Mean over unordered pairs `i < k`; `None` for a single model.
    pub mean_off_diagonal: Option<f64>,
    /// Models whose flat view has zero norm (their entries are 0).
    pub zero_norm: Vec<usize>,
}

pub fn cosine_similarity_matrix(models: &[&ModelParams]) -> Result<CosineReport> {
    let Some(first) = models.first() else {
        return Err(Error::Empty("no models to compare".into()));
    };
    if models.iter().any(|m| m.config() != first.config()) {
        return Err(Error::Mismatch("cosine similarity across different configs".into()));
    }
    let flats: Vec<&[f64]> = models.iter().map(|m| m.flat_view()).collect();
    cosine_report(&flats)
}

pub(crate) fn cosine_report(flats: &[&[f64]]) -> Result<CosineReport> {
    let m = flats.len();
    let zero_norm: Vec<usize> = (0..m).filter(|&i| flats[i].iter().all(|v| *v == 0.0)).collect();
    let mut matrix = vec![vec![0.0; m]; m];
    for i in 0..m {
        for k in i..m {
            let s = if i == k && !zero_norm.contains(&i) {
                1.0
            } else {
                cosine_similarity(flats[i], flats[k])?.unwrap_or(0.0)
            };
            matrix[i][k] = s;
            matrix[k][i] = s;
        }
    }
    let off: Vec<f64> = (0..m).flat_map(|i| (i + 1..m).map(move |k| (i, k))).map(|(i, k)| matrix[i][k]).collect();
    Ok(CosineReport {
        mean_off_diagonal: (!off.is_empty()).then(|| off.iter().sum::<f64>() / off.len() as f64),
        matrix,
        zero_norm,
    })
}
