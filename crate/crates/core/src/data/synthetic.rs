//! Desk-scale synthetic activity data.
//!
//! Every non-null class is a multichannel sinusoid with its own frequency and
//! phase per channel; class 0 is low-amplitude noise. Each sequence is a
//! shuffled series of class segments whose per-class counts are allocated so
//! the share of timestamps per class follows the class weights.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DatasetBundle, SensorSequence};
use crate::rng::RngStream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub channels: usize,
    pub sampling_rate: f64,
    /// Segment length in samples, one entry per class.
    pub segment_lengths: Vec<usize>,
    /// Share of timestamps per class; normalized internally.
    pub class_weights: Vec<f64>,
    /// Standard deviation of the additive Gaussian noise on every class.
    pub noise_std: f64,
    #[serde(default = "default_null_amplitude")]
    pub null_amplitude: f64,
    /// Draw a fresh phase offset for every segment. When false, class signals
    /// are phase-locked to the absolute timestamp.
    #[serde(default = "default_true")]
    pub random_phase: bool,
    #[serde(default = "default_min_frequency")]
    pub min_frequency: f64,
    #[serde(default = "default_max_frequency")]
    pub max_frequency: f64,
    pub sequence_length: usize,
    pub train_sequences: usize,
    pub validation_sequences: usize,
    pub test_sequences: usize,
}

fn default_null_amplitude() -> f64 {
    0.3
}
fn default_true() -> bool {
    true
}
fn default_min_frequency() -> f64 {
    1.0
}
fn default_max_frequency() -> f64 {
    6.0
}

/// Waveform parameters of one non-null class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassTemplate {
    /// Hz, per channel.
    pub frequency: Vec<f64>,
    /// Radians, per channel.
    pub phase: Vec<f64>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("synthetic spec: {msg}")));
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.channels == 0 {
            return bad("channels must be >= 1".into());
        }
        if !(self.sampling_rate.is_finite() && self.sampling_rate > 0.0) {
            return bad("sampling_rate must be positive".into());
        }
        if self.segment_lengths.len() != self.num_classes || self.segment_lengths.contains(&0) {
            return bad("segment_lengths needs one positive entry per class".into());
        }
        if self.class_weights.len() != self.num_classes
            || self.class_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.class_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("class_weights needs one nonnegative entry per class, not all zero".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("noise_std must be >= 0".into());
        }
        if !(self.null_amplitude.is_finite() && self.null_amplitude >= 0.0) {
            return bad("null_amplitude must be >= 0".into());
        }
        if !(self.min_frequency > 0.0
            && self.min_frequency <= self.max_frequency
            && self.max_frequency < self.sampling_rate / 2.0)
        {
            return bad("need 0 < min_frequency <= max_frequency < sampling_rate / 2".into());
        }
        if self.sequence_length == 0 || self.train_sequences == 0 {
            return bad("need at least one nonempty training sequence".into());
        }
        Ok(())
    }

    /// Class waveforms for `seed`; index 0 (the null class) is `None`.
    pub fn templates(&self, seed: u64) -> Vec<Option<ClassTemplate>> {
        let mut rng = RngStream::new(seed).derive("templates", 0);
        (0..self.num_classes)
            .map(|c| {
                (c > 0).then(|| {
                    let frequency = (0..self.channels)
                        .map(|_| rng.random_range(self.min_frequency..=self.max_frequency))
                        .collect();
                    let phase = (0..self.channels).map(|_| rng.random_range(0.0..TAU)).collect();
                    ClassTemplate { frequency, phase }
                })
            })
            .collect()
    }

    fn generate_sequence(
        &self,
        id: String,
        templates: &[Option<ClassTemplate>],
        rng: &mut RngStream,
    ) -> Result<SensorSequence> {
        let total_weight: f64 = self.class_weights.iter().sum();
        let target = self.sequence_length;

        // Expected segment count per class for timestamp shares that follow the
        // weights; fractional parts are resolved by a Bernoulli draw.
        let mut plan = Vec::new();
        let mut planned = 0usize;
        for c in 0..self.num_classes {
            let expected = self.class_weights[c] / total_weight * target as f64
                / self.segment_lengths[c] as f64;
            let mut n = expected.floor() as usize;
            if rng.random::<f64>() < expected.fract() {
                n += 1;
            }
            plan.extend(std::iter::repeat_n(c, n));
            planned += n * self.segment_lengths[c];
        }
        while planned < target {
            let c = self.draw_class(rng, total_weight);
            plan.push(c);
            planned += self.segment_lengths[c];
        }
        plan.shuffle(rng);

        let mut values = Vec::with_capacity(target * self.channels);
        let mut labels = Vec::with_capacity(target);
        'segments: for &c in &plan {
            let offset = if self.random_phase {
                rng.random_range(0.0..TAU)
            } else {
                0.0
            };
            for _ in 0..self.segment_lengths[c] {
                if labels.len() == target {
                    break 'segments;
                }
                let t = labels.len() as f64 / self.sampling_rate;
                for ch in 0..self.channels {
                    let signal = match &templates[c] {
                        None => self.null_amplitude * rng.sample::<f64, _>(StandardNormal),
                        Some(tpl) => (TAU * tpl.frequency[ch] * t + tpl.phase[ch] + offset).sin(),
                    };
                    let noise = if self.noise_std > 0.0 {
                        self.noise_std * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    values.push(signal + noise);
                }
                labels.push(c);
            }
        }
        SensorSequence::new(id, values, self.channels, labels, self.sampling_rate)
    }

    fn draw_class(&self, rng: &mut RngStream, total_weight: f64) -> usize {
        // proportional to weight / segment length, so time shares follow weights
        let rates: Vec<f64> = (0..self.num_classes)
            .map(|c| self.class_weights[c] / total_weight / self.segment_lengths[c] as f64)
            .collect();
        let mut u = rng.random::<f64>() * rates.iter().sum::<f64>();
        for (c, r) in rates.iter().enumerate() {
            if u < *r {
                return c;
            }
            u -= r;
        }
        rates.iter().rposition(|&r| r > 0.0).unwrap_or(0)
    }
}

/// Deterministic in `(spec, seed)`. Templates are shared by all splits; each
/// sequence draws from its own lineage, so splits never share random streams.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<DatasetBundle> {
    spec.validate()?;
    let templates = spec.templates(seed);
    let root = RngStream::new(seed);
    let split = |name: &str, count: usize| {
        (0..count)
            .map(|i| {
                let mut rng = root.derive(name, i as u64);
                spec.generate_sequence(format!("{name}-{i:03}"), &templates, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
    };
    let class_names = (0..spec.num_classes)
        .map(|c| if c == 0 { "null".to_string() } else { format!("activity-{c}") })
        .collect();
    DatasetBundle::new(
        split("train", spec.train_sequences)?,
        split("validation", spec.validation_sequences)?,
        split("test", spec.test_sequences)?,
        spec.num_classes,
        Some(class_names),
    )
}
