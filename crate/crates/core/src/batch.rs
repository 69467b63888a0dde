//! Training batches as seen by the boosters and the backbone.

use crate::data::ClassId;
use crate::sampling::Frame;
use crate::{Error, Result};

/// A stack of frames, `values[(i * L + t) * C + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBatch {
    pub values: Vec<f64>,
    pub labels: Vec<ClassId>,
    pub length: usize,
    pub channels: usize,
}

/// Virtual frames with their two source labels and the shared mixing ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedBatch {
    pub values: Vec<f64>,
    pub label_a: Vec<ClassId>,
    pub label_b: Vec<ClassId>,
    pub lambda: f64,
    pub length: usize,
    pub channels: usize,
}

impl FrameBatch {
    pub fn from_frames<'a, I>(frames: I, length: usize, channels: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Frame>,
    {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for f in frames {
            if f.values.len() != length * channels {
                return Err(Error::Shape(format!(
                    "frame has {} values, expected {length} x {channels}",
                    f.values.len()
                )));
            }
            values.extend_from_slice(&f.values);
            labels.push(f.label);
        }
        Ok(Self {
            values,
            labels,
            length,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.length * self.channels;
        &self.values[i * n..(i + 1) * n]
    }
}

impl MixedBatch {
    /// Plain batch wrapped with `λ = 1` and `label_b = label_a`.
    pub fn degenerate(batch: FrameBatch) -> Self {
        Self {
            values: batch.values,
            label_b: batch.labels.clone(),
            label_a: batch.labels,
            lambda: 1.0,
            length: batch.length,
            channels: batch.channels,
        }
    }

    pub fn len(&self) -> usize {
        self.label_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label_a.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.length * self.channels;
        &self.values[i * n..(i + 1) * n]
    }
}

/// Shared access to the value tensor of either batch kind.
pub trait BatchValues {
    fn values_mut(&mut self) -> &mut [f64];
    /// `(batch, length, channels)`
    fn dims(&self) -> (usize, usize, usize);
}

impl BatchValues for FrameBatch {
    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    fn dims(&self) -> (usize, usize, usize) {
        (self.len(), self.length, self.channels)
    }
}

impl BatchValues for MixedBatch {
    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    fn dims(&self) -> (usize, usize, usize) {
        (self.len(), self.length, self.channels)
    }
}
