//! Resilient layer: C-Drop, which zeroes a few randomly chosen channels across
//! a whole training batch to mimic faulty or missing sensors.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::FrameBatch;
use crate::rng::RngStream;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CDropConfig {
    /// Upper bound of the per-batch drop fraction.
    pub max_fraction: f64,
}

impl Default for CDropConfig {
    fn default() -> Self {
        Self { max_fraction: 0.2 }
    }
}

impl CDropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_fraction) {
            return Err(Error::Config(format!(
                "c_drop max_fraction must lie in [0, 1], got {}",
                self.max_fraction
            )));
        }
        Ok(())
    }
}

/// Draws `f ~ U[0, max_fraction]` once for the batch and zeroes `⌊f·C⌋`
/// distinct channels in every frame. Returns the dropped channel indices.
pub fn c_drop(batch: &mut FrameBatch, cfg: &CDropConfig, rng: &mut RngStream) -> Result<Vec<usize>> {
    cfg.validate()?;
    let fraction = rng.random::<f64>() * cfg.max_fraction;
    c_drop_with_fraction(batch, fraction, rng)
}

/// C-Drop with a given fraction; only the channel choice is random.
pub fn c_drop_with_fraction(batch: &mut FrameBatch, fraction: f64, rng: &mut RngStream) -> Result<Vec<usize>> {
    if batch.is_empty() {
        return Err(Error::Empty("cannot drop channels of an empty batch".into()));
    }
    let channels = batch.channels;
    let k = ((fraction * channels as f64).floor() as usize).min(channels);
    let mut dropped = index::sample(rng, channels, k).into_vec();
    dropped.sort_unstable();
    zero_channels(batch, &dropped);
    Ok(dropped)
}

pub fn zero_channels(batch: &mut FrameBatch, channels: &[usize]) {
    let c = batch.channels;
    for row in batch.values.chunks_exact_mut(c) {
        for &ch in channels {
            row[ch] = 0.0;
        }
    }
}
