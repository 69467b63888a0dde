//! Sensor sequences, normalization, window geometry and dataset splits.

mod csv_io;
pub mod synthetic;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::numeric::exact_sum;
use crate::{Error, Result};

pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use synthetic::{generate_synthetic, SyntheticSpec};

pub type ClassId = usize;

/// Floor applied to a channel's standard deviation before dividing.
pub const STD_EPSILON: f64 = 1e-8;

/// One long multichannel recording with a label per timestamp.
///
/// Values are stored row-major: `values[t * channels + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSequence {
    id: String,
    values: Vec<f64>,
    channels: usize,
    labels: Vec<ClassId>,
    sampling_rate: f64,
}

impl SensorSequence {
    pub fn new(
        id: impl Into<String>,
        values: Vec<f64>,
        channels: usize,
        labels: Vec<ClassId>,
        sampling_rate: f64,
    ) -> Result<Self> {
        let id = id.into();
        if channels == 0 {
            return Err(Error::Data(format!("sequence '{id}' has no channels")));
        }
        if labels.is_empty() {
            return Err(Error::Empty(format!("sequence '{id}' has no timestamps")));
        }
        if values.len() != labels.len() * channels {
            return Err(Error::Shape(format!(
                "sequence '{id}': {} values for {} timestamps x {channels} channels",
                values.len(),
                labels.len()
            )));
        }
        if !(sampling_rate.is_finite() && sampling_rate > 0.0) {
            return Err(Error::Data(format!(
                "sequence '{id}': sampling rate must be positive, got {sampling_rate}"
            )));
        }
        Ok(Self {
            id,
            values,
            channels,
            labels,
            sampling_rate,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn sampling_rate(&self) -> f64 {
        self.sampling_rate
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }

    /// Rows `start..start + len` as one contiguous slice.
    pub fn rows(&self, start: usize, len: usize) -> &[f64] {
        &self.values[start * self.channels..(start + len) * self.channels]
    }

    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().position(|&l| l >= num_classes) {
            Some(t) => Err(Error::Data(format!(
                "sequence '{}': label {} at timestamp {t} is not below {num_classes}",
                self.id, self.labels[t]
            ))),
            None => Ok(()),
        }
    }
}

/// Per-channel normalization statistics fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Inverse of [`apply_normalizer`] for channels with `std > ε`.
    pub fn denormalize(&self, seq: &SensorSequence) -> Result<SensorSequence> {
        self.check_channels(seq.channels())?;
        let c = seq.channels();
        let values = seq
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.std[i % c].max(STD_EPSILON) + self.mean[i % c])
            .collect();
        SensorSequence::new(seq.id(), values, c, seq.labels().to_vec(), seq.sampling_rate())
    }

    fn check_channels(&self, found: usize) -> Result<()> {
        if found != self.channels() {
            return Err(Error::ChannelMismatch {
                expected: self.channels(),
                found,
            });
        }
        Ok(())
    }
}

/// Population mean and standard deviation per channel over every timestamp of
/// every training sequence. Both reductions are order independent.
pub fn fit_normalizer(train: &[SensorSequence]) -> Result<ChannelStats> {
    let first = train
        .first()
        .ok_or_else(|| Error::Empty("no training sequences to fit a normalizer".into()))?;
    let channels = first.channels();
    if let Some(bad) = train.iter().find(|s| s.channels() != channels) {
        return Err(Error::ChannelMismatch {
            expected: channels,
            found: bad.channels(),
        });
    }
    let count: usize = train.iter().map(SensorSequence::len).sum();
    let column = |c: usize| {
        train
            .iter()
            .flat_map(move |s| s.values().iter().skip(c).step_by(channels).copied())
    };

    let mut mean = Vec::with_capacity(channels);
    let mut std = Vec::with_capacity(channels);
    for c in 0..channels {
        let m = exact_sum(column(c)) / count as f64;
        let var = exact_sum(column(c).map(|v| (v - m) * (v - m))) / count as f64;
        mean.push(m);
        std.push(var.sqrt());
    }
    Ok(ChannelStats { mean, std })
}

/// `(v - mean_c) / max(std_c, ε)` for every value; labels are untouched.
pub fn apply_normalizer(seq: &SensorSequence, stats: &ChannelStats) -> Result<SensorSequence> {
    stats.check_channels(seq.channels())?;
    let c = seq.channels();
    let values = seq
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| (v - stats.mean[i % c]) / stats.std[i % c].max(STD_EPSILON))
        .collect();
    SensorSequence::new(seq.id(), values, c, seq.labels().to_vec(), seq.sampling_rate())
}

/// Majority label of a window. Ties go to the tied label that occurs latest,
/// which is the last timestamp's label whenever that label is among the tied.
pub fn assign_frame_label(window_labels: &[ClassId]) -> ClassId {
    assert!(!window_labels.is_empty(), "cannot label an empty window");
    // label -> (count, last position)
    let mut tally: BTreeMap<ClassId, (usize, usize)> = BTreeMap::new();
    for (t, &label) in window_labels.iter().enumerate() {
        let entry = tally.entry(label).or_insert((0, t));
        entry.0 += 1;
        entry.1 = t;
    }
    tally
        .into_iter()
        .max_by_key(|&(_, (count, last))| (count, last))
        .map(|(label, _)| label)
        .expect("nonempty window")
}

/// Sliding-window configuration in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub length_seconds: f64,
    pub overlap_fraction: f64,
}

/// Window length and step in samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowShape {
    pub length: usize,
    pub step: usize,
}

impl WindowConfig {
    pub fn new(length_seconds: f64, overlap_fraction: f64) -> Result<Self> {
        let cfg = Self {
            length_seconds,
            overlap_fraction,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_seconds.is_finite() && self.length_seconds > 0.0) {
            return Err(Error::Config(format!(
                "window length must be positive, got {}",
                self.length_seconds
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::Config(format!(
                "window overlap must lie in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        Ok(())
    }

    /// `L = round(seconds * rate)`, `step = max(1, round(L * (1 - overlap)))`.
    pub fn shape(&self, sampling_rate: f64) -> Result<WindowShape> {
        self.validate()?;
        let length = (self.length_seconds * sampling_rate).round() as usize;
        if length == 0 {
            return Err(Error::Config(format!(
                "window of {} s at {sampling_rate} Hz is shorter than one sample",
                self.length_seconds
            )));
        }
        let step = ((length as f64 * (1.0 - self.overlap_fraction)).round() as usize).max(1);
        WindowShape::new(length, step.min(length))
    }
}

impl WindowShape {
    pub fn new(length: usize, step: usize) -> Result<Self> {
        if length == 0 || step == 0 || step > length {
            return Err(Error::Config(format!(
                "window shape needs 1 <= step <= length, got length {length}, step {step}"
            )));
        }
        Ok(Self { length, step })
    }
}

/// The three hold-out splits plus class metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub train: Vec<SensorSequence>,
    pub validation: Vec<SensorSequence>,
    pub test: Vec<SensorSequence>,
    pub num_classes: usize,
    pub class_names: Option<Vec<String>>,
}

impl DatasetBundle {
    pub fn new(
        train: Vec<SensorSequence>,
        validation: Vec<SensorSequence>,
        test: Vec<SensorSequence>,
        num_classes: usize,
        class_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let bundle = Self {
            train,
            validation,
            test,
            num_classes,
            class_names,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Data(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.num_classes {
                return Err(Error::Data(format!(
                    "{} class names for {} classes",
                    names.len(),
                    self.num_classes
                )));
            }
        }
        let mut seen = HashSet::new();
        let mut channels = None;
        for seq in self.train.iter().chain(&self.validation).chain(&self.test) {
            if !seen.insert(seq.id()) {
                return Err(Error::Data(format!(
                    "sequence id '{}' appears more than once across splits",
                    seq.id()
                )));
            }
            seq.check_labels(self.num_classes)?;
            match channels {
                None => channels = Some(seq.channels()),
                Some(c) if c != seq.channels() => {
                    return Err(Error::ChannelMismatch {
                        expected: c,
                        found: seq.channels(),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> Option<usize> {
        self.train.first().map(SensorSequence::channels)
    }

    /// Fits statistics on the training split and applies them to all three.
    pub fn normalized(&self) -> Result<(DatasetBundle, ChannelStats)> {
        let stats = fit_normalizer(&self.train)?;
        let apply = |seqs: &[SensorSequence]| {
            seqs.iter()
                .map(|s| apply_normalizer(s, &stats))
                .collect::<Result<Vec<_>>>()
        };
        let bundle = DatasetBundle {
            train: apply(&self.train)?,
            validation: apply(&self.validation)?,
            test: apply(&self.test)?,
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
        };
        Ok((bundle, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(values: &[f64]) -> SensorSequence {
        SensorSequence::new("s", values.to_vec(), 1, vec![0; values.len()], 1.0).unwrap()
    }

    #[test]
    fn fit_two_values() {
        let stats = fit_normalizer(&[single(&[1.0, 3.0])]).unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.std, vec![1.0]);
    }

    #[test]
    fn fit_across_sequences() {
        let b = SensorSequence::new("b", vec![2.0], 1, vec![0], 1.0).unwrap();
        let stats = fit_normalizer(&[single(&[0.0]), b]).unwrap();
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.std, vec![1.0]);
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let seq = single(&[5.0, 5.0, 5.0]);
        let stats = fit_normalizer(std::slice::from_ref(&seq)).unwrap();
        assert_eq!(stats.mean, vec![5.0]);
        assert_eq!(stats.std, vec![0.0]);
        let out = apply_normalizer(&seq, &stats).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_definition() {
        let stats = ChannelStats {
            mean: vec![2.0],
            std: vec![1.0],
        };
        let out = apply_normalizer(&single(&[1.0, 3.0]), &stats).unwrap();
        assert_eq!(out.values(), &[-1.0, 1.0]);
    }

    #[test]
    fn normalizing_with_own_stats_is_standard() {
        let seq = single(&[0.3, -1.2, 4.4, 2.0, 0.0, 9.5]);
        let stats = fit_normalizer(std::slice::from_ref(&seq)).unwrap();
        let out = apply_normalizer(&seq, &stats).unwrap();
        let again = fit_normalizer(&[out]).unwrap();
        assert!(again.mean[0].abs() < 1e-9);
        assert!((again.std[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let two = SensorSequence::new("t", vec![0.0, 1.0], 2, vec![0], 1.0).unwrap();
        assert!(matches!(
            fit_normalizer(&[single(&[1.0]), two.clone()]),
            Err(Error::ChannelMismatch { .. })
        ));
        let stats = fit_normalizer(&[single(&[1.0])]).unwrap();
        assert!(apply_normalizer(&two, &stats).is_err());
    }

    #[test]
    fn frame_labels() {
        assert_eq!(assign_frame_label(&[2, 2, 2, 0]), 2);
        assert_eq!(assign_frame_label(&[0, 1]), 1);
        assert_eq!(assign_frame_label(&[1, 1, 0, 0, 0]), 0);
        assert_eq!(assign_frame_label(&[1, 0]), 0);
        // tie between 0 and 1, last label is a minority: latest tied label wins
        assert_eq!(assign_frame_label(&[0, 1, 0, 1, 2]), 1);
    }

    #[test]
    fn window_shapes() {
        let opp = WindowConfig::new(1.0, 0.5).unwrap().shape(30.0).unwrap();
        assert_eq!(opp, WindowShape { length: 30, step: 15 });
        let pamap = WindowConfig::new(5.12, 0.78).unwrap().shape(100.0).unwrap();
        assert_eq!(pamap.length, 512);
        assert_eq!(pamap.step, 113);
        assert!(WindowConfig::new(1.0, 1.0).is_err());
        assert!(WindowConfig::new(0.01, 0.0).unwrap().shape(10.0).is_err());
    }

    #[test]
    fn bundle_rejects_shared_ids_and_bad_labels() {
        let a = single(&[1.0]);
        assert!(DatasetBundle::new(vec![a.clone()], vec![a.clone()], vec![], 2, None).is_err());
        let bad = SensorSequence::new("x", vec![1.0], 1, vec![3], 1.0).unwrap();
        assert!(DatasetBundle::new(vec![bad], vec![], vec![], 2, None).is_err());
        assert!(DatasetBundle::new(vec![a], vec![], vec![], 1, None).is_err());
    }

    proptest! {
        #[test]
        fn normalization_round_trip(values in prop::collection::vec(-1e3f64..1e3, 2..60)) {
            let seq = SensorSequence::new("p", values.clone(), 2, vec![0; values.len() / 2], 1.0);
            prop_assume!(seq.is_ok());
            let seq = seq.unwrap();
            let stats = fit_normalizer(std::slice::from_ref(&seq)).unwrap();
            prop_assume!(stats.std.iter().all(|&s| s > STD_EPSILON));
            let back = stats.denormalize(&apply_normalizer(&seq, &stats).unwrap()).unwrap();
            for (a, b) in seq.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }

        #[test]
        fn fit_is_permutation_invariant(
            rows in prop::collection::vec((-50.0f64..50.0, -1.0f64..1.0), 1..50),
            rot in 0usize..50,
        ) {
            let flat: Vec<f64> = rows.iter().flat_map(|&(a, b)| [a, b]).collect();
            let mut rotated = rows.clone();
            rotated.rotate_left(rot % rows.len());
            rotated.reverse();
            let flat_r: Vec<f64> = rotated.iter().flat_map(|&(a, b)| [a, b]).collect();
            let n = rows.len();
            let s1 = SensorSequence::new("a", flat, 2, vec![0; n], 1.0).unwrap();
            let s2 = SensorSequence::new("a", flat_r, 2, vec![0; n], 1.0).unwrap();
            prop_assert_eq!(fit_normalizer(&[s1]).unwrap(), fit_normalizer(&[s2]).unwrap());
        }

        #[test]
        fn frame_label_occurs_in_input(labels in prop::collection::vec(0usize..5, 1..30)) {
            prop_assert!(labels.contains(&assign_frame_label(&labels)));
        }
    }
}
