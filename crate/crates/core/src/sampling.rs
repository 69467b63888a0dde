//! Sampling layer: fixed sliding-window framing and the R-Frame booster.
//!
//! R-Frame regenerates the training frame set every epoch: one random offset
//! `Δ ∈ {0, …, ⌊L/2⌋}` is drawn for the epoch, the first `Δ` timestamps of every
//! training sequence are dropped, the remainder is framed with the standard
//! sliding window, and the pooled frames are bootstrap-resampled to the pool
//! size.

use std::sync::Arc;

use rand::Rng;

use crate::data::{assign_frame_label, ClassId, SensorSequence, WindowConfig, WindowShape};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Where a frame was cut from: sequence index within its split and the start
/// timestamp in the original (un-offset) sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FrameOrigin {
    pub sequence: usize,
    pub start: usize,
}

/// One `L x C` window, stored time-major. Cloning shares the values.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub values: Arc<[f64]>,
    pub label: ClassId,
    pub origin: FrameOrigin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    pub frames: Vec<Frame>,
    pub length: usize,
    pub channels: usize,
    pub epoch_index: Option<usize>,
    pub offset_used: Option<usize>,
}

impl FrameSet {
    pub fn empty(length: usize, channels: usize) -> Self {
        Self {
            frames: Vec::new(),
            length,
            channels,
            epoch_index: None,
            offset_used: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn labels(&self) -> Vec<ClassId> {
        self.frames.iter().map(|f| f.label).collect()
    }

    pub fn frame_len(&self) -> usize {
        self.length * self.channels
    }
}

/// Frames `seq[offset..]` with `shape`; origins are reported in the original
/// sequence's coordinates.
fn frame_from(seq: &SensorSequence, index: usize, shape: WindowShape, offset: usize) -> Vec<Frame> {
    let t = seq.len().saturating_sub(offset);
    if t < shape.length {
        return Vec::new();
    }
    let count = (t - shape.length) / shape.step + 1;
    (0..count)
        .map(|i| {
            let start = offset + i * shape.step;
            Frame {
                values: Arc::from(seq.rows(start, shape.length)),
                label: assign_frame_label(&seq.labels()[start..start + shape.length]),
                origin: FrameOrigin {
                    sequence: index,
                    start,
                },
            }
        })
        .collect()
}

/// Standard sliding window: starts `0, step, 2·step, …` while `start + L <= T`.
pub fn sliding_window(seq: &SensorSequence, cfg: &WindowConfig) -> Result<FrameSet> {
    let shape = cfg.shape(seq.sampling_rate())?;
    sliding_window_shape(seq, 0, shape)
}

/// [`sliding_window`] with an explicit shape; `index` is recorded in origins.
pub fn sliding_window_shape(seq: &SensorSequence, index: usize, shape: WindowShape) -> Result<FrameSet> {
    if seq.len() < shape.length {
        return Err(Error::Empty(format!(
            "sequence '{}' has {} timestamps, shorter than the window ({})",
            seq.id(),
            seq.len(),
            shape.length
        )));
    }
    Ok(FrameSet {
        frames: frame_from(seq, index, shape, 0),
        length: shape.length,
        channels: seq.channels(),
        epoch_index: None,
        offset_used: Some(0),
    })
}

/// Window shape shared by all `seqs`; sequences must agree on channel count
/// and on the window length their sampling rate implies.
pub fn common_shape(seqs: &[SensorSequence], cfg: &WindowConfig) -> Result<(WindowShape, usize)> {
    let first = seqs
        .first()
        .ok_or_else(|| Error::Empty("no sequences to frame".into()))?;
    let shape = cfg.shape(first.sampling_rate())?;
    for s in seqs {
        if s.channels() != first.channels() {
            return Err(Error::ChannelMismatch {
                expected: first.channels(),
                found: s.channels(),
            });
        }
        if cfg.shape(s.sampling_rate())? != shape {
            return Err(Error::Data(format!(
                "sequence '{}' has sampling rate {} Hz, which implies a different window than {} Hz",
                s.id(),
                s.sampling_rate(),
                first.sampling_rate()
            )));
        }
    }
    Ok((shape, first.channels()))
}

/// Evaluation framing: plain sliding window over every sequence (Δ = 0, no
/// resampling). Sequences shorter than one window are skipped.
pub fn frame_split(seqs: &[SensorSequence], cfg: &WindowConfig) -> Result<FrameSet> {
    let (shape, channels) = common_shape(seqs, cfg)?;
    let mut set = FrameSet::empty(shape.length, channels);
    for (i, s) in seqs.iter().enumerate() {
        if s.len() < shape.length {
            log::warn!("skipping sequence '{}': shorter than one window", s.id());
            continue;
        }
        set.frames.extend(frame_from(s, i, shape, 0));
    }
    set.offset_used = Some(0);
    Ok(set)
}

/// Which parts of R-Frame are active. Both on is the booster; offset off and
/// bootstrap on is the plain epoch-wise bagging baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RFrameOptions {
    pub random_offset: bool,
    pub bootstrap: bool,
}

impl Default for RFrameOptions {
    fn default() -> Self {
        Self {
            random_offset: true,
            bootstrap: true,
        }
    }
}

/// One epoch's training frames.
///
/// With the random offset enabled, sequences shorter than `L + ⌊L/2⌋` are
/// skipped for every epoch so the contributing set does not depend on `Δ`.
pub fn r_frame_epoch(
    seqs: &[SensorSequence],
    cfg: &WindowConfig,
    rng: &mut RngStream,
    options: RFrameOptions,
    epoch_index: usize,
) -> Result<FrameSet> {
    let (shape, channels) = common_shape(seqs, cfg)?;
    let max_offset = shape.length / 2;
    let offset = if options.random_offset {
        rng.random_range(0..=max_offset)
    } else {
        0
    };
    let required = shape.length + if options.random_offset { max_offset } else { 0 };

    let mut pool = FrameSet::empty(shape.length, channels);
    for (i, s) in seqs.iter().enumerate() {
        if s.len() < required {
            log::warn!(
                "epoch {epoch_index}: skipping sequence '{}' ({} < {required} timestamps)",
                s.id(),
                s.len()
            );
            continue;
        }
        pool.frames.extend(frame_from(s, i, shape, offset));
    }
    if pool.is_empty() {
        return Err(Error::Empty(format!(
            "epoch {epoch_index}: every training sequence is too short for window {}",
            shape.length
        )));
    }

    let mut out = if options.bootstrap {
        bootstrap(&pool, rng)?
    } else {
        pool
    };
    out.epoch_index = Some(epoch_index);
    out.offset_used = Some(offset);
    Ok(out)
}

/// `n` uniform draws with replacement from `n` frames. Duplicates share storage.
pub fn bootstrap(frames: &FrameSet, rng: &mut RngStream) -> Result<FrameSet> {
    let n = frames.len();
    if n == 0 {
        return Err(Error::Empty("cannot bootstrap an empty frame set".into()));
    }
    let drawn = (0..n)
        .map(|_| frames.frames[rng.random_range(0..n)].clone())
        .collect();
    Ok(FrameSet {
        frames: drawn,
        ..frames.clone_meta()
    })
}

impl FrameSet {
    fn clone_meta(&self) -> FrameSet {
        FrameSet {
            frames: Vec::new(),
            length: self.length,
            channels: self.channels,
            epoch_index: self.epoch_index,
            offset_used: self.offset_used,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(t: usize, channels: usize) -> SensorSequence {
        let values = (0..t * channels).map(|i| i as f64).collect();
        let labels = (0..t).map(|i| i % 3).collect();
        SensorSequence::new(format!("ramp{t}"), values, channels, labels, 1.0).unwrap()
    }

    #[test]
    fn sliding_window_starts() {
        let seq = ramp(10, 2);
        let cfg = WindowConfig::new(4.0, 0.5).unwrap();
        let set = sliding_window(&seq, &cfg).unwrap();
        let starts: Vec<usize> = set.frames.iter().map(|f| f.origin.start).collect();
        assert_eq!(starts, vec![0, 2, 4, 6]);
        assert_eq!(&*set.frames[1].values, seq.rows(2, 4));
    }

    #[test]
    fn window_equal_to_sequence() {
        let seq = ramp(4, 1);
        let set = sliding_window(&seq, &WindowConfig::new(4.0, 0.5).unwrap()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.frames[0].origin.start, 0);
        assert!(sliding_window(&ramp(3, 1), &WindowConfig::new(4.0, 0.5).unwrap()).is_err());
    }

    #[test]
    fn opp_window() {
        let seq = SensorSequence::new("o", vec![0.0; 300], 1, vec![0; 300], 30.0).unwrap();
        let set = sliding_window(&seq, &WindowConfig::new(1.0, 0.5).unwrap()).unwrap();
        assert_eq!(set.length, 30);
        assert_eq!(set.frames[1].origin.start, 15);
    }

    fn offset_frames(offset: usize) -> Vec<usize> {
        let seq = ramp(100, 1);
        let shape = WindowShape::new(30, 15).unwrap();
        frame_from(&seq, 0, shape, offset)
            .iter()
            .map(|f| f.origin.start - offset)
            .collect()
    }

    #[test]
    fn offset_remainder_framing() {
        assert_eq!(offset_frames(15), vec![0, 15, 30, 45]);
    }

    #[test]
    fn r_frame_without_offset_or_bootstrap_is_sliding_window() {
        let seqs = vec![ramp(50, 2), ramp(37, 2)];
        let cfg = WindowConfig::new(8.0, 0.25).unwrap();
        let mut rng = RngStream::new(3);
        let options = RFrameOptions {
            random_offset: false,
            bootstrap: false,
        };
        let set = r_frame_epoch(&seqs, &cfg, &mut rng, options, 1).unwrap();
        let mut expected = sliding_window_shape(&seqs[0], 0, cfg.shape(1.0).unwrap()).unwrap().frames;
        expected.extend(sliding_window_shape(&seqs[1], 1, cfg.shape(1.0).unwrap()).unwrap().frames);
        assert_eq!(set.frames, expected);
        assert_eq!(set.offset_used, Some(0));
        assert_eq!(set.epoch_index, Some(1));
    }

    #[test]
    fn offset_covers_inclusive_range() {
        let seqs = vec![ramp(200, 1)];
        let cfg = WindowConfig::new(30.0, 0.5).unwrap();
        let root = RngStream::new(9);
        let mut seen = [0usize; 16];
        for k in 0..10_000u64 {
            let mut rng = root.derive("epoch", k);
            let opts = RFrameOptions { random_offset: true, bootstrap: false };
            let set = r_frame_epoch(&seqs, &cfg, &mut rng, opts, k as usize).unwrap();
            let d = set.offset_used.unwrap();
            assert!(d <= 15);
            seen[d] += 1;
        }
        assert!(seen.iter().all(|&c| c > 0), "{seen:?}");
    }

    #[test]
    fn short_sequences_are_skipped() {
        let seqs = vec![ramp(40, 1), ramp(100, 1)];
        let cfg = WindowConfig::new(30.0, 0.5).unwrap();
        let mut rng = RngStream::new(0);
        let set = r_frame_epoch(&seqs, &cfg, &mut rng, RFrameOptions::default(), 1).unwrap();
        assert!(set.frames.iter().all(|f| f.origin.sequence == 1));
        let mut rng = RngStream::new(0);
        assert!(r_frame_epoch(&seqs[..1], &cfg, &mut rng, RFrameOptions::default(), 1).is_err());
    }

    #[test]
    fn bootstrap_single_and_empty() {
        let seq = ramp(4, 1);
        let set = sliding_window(&seq, &WindowConfig::new(4.0, 0.0).unwrap()).unwrap();
        let mut rng = RngStream::new(1);
        assert_eq!(bootstrap(&set, &mut rng).unwrap().frames, set.frames);
        let empty = FrameSet::empty(4, 1);
        assert!(bootstrap(&empty, &mut rng).is_err());
    }

    #[test]
    fn bootstrap_golden_draw() {
        let seq = ramp(5, 1);
        let set = sliding_window(&seq, &WindowConfig::new(1.0, 0.0).unwrap()).unwrap();
        let mut rng = RngStream::new(42);
        let starts: Vec<usize> = bootstrap(&set, &mut rng)
            .unwrap()
            .frames
            .iter()
            .map(|f| f.origin.start)
            .collect();
        assert_eq!(starts, GOLDEN_BOOTSTRAP_42);
    }

    // Pins the draw sequence for seed 42.
    const GOLDEN_BOOTSTRAP_42: [usize; 5] = [4, 1, 4, 3, 4];

    #[test]
    fn bootstrap_shares_storage() {
        let seq = ramp(20, 1);
        let set = sliding_window(&seq, &WindowConfig::new(5.0, 0.0).unwrap()).unwrap();
        let mut rng = RngStream::new(4);
        let out = bootstrap(&set, &mut rng).unwrap();
        for f in &out.frames {
            let src = set.frames.iter().find(|s| s.origin == f.origin).unwrap();
            assert!(Arc::ptr_eq(&src.values, &f.values));
        }
    }

    proptest! {
        #[test]
        fn sliding_window_count_matches_enumeration(t in 1usize..200, l in 1usize..50, step_frac in 0.0f64..1.0) {
            prop_assume!(t >= l);
            let step = ((l as f64 * step_frac).ceil() as usize).clamp(1, l);
            let seq = SensorSequence::new("p", vec![0.0; t], 1, vec![0; t], 1.0).unwrap();
            let set = sliding_window_shape(&seq, 0, WindowShape::new(l, step).unwrap()).unwrap();
            let brute: Vec<usize> = (0..t).filter(|s| s % step == 0 && s + l <= t).collect();
            prop_assert_eq!(set.len(), (t - l) / step + 1);
            prop_assert_eq!(set.frames.iter().map(|f| f.origin.start).collect::<Vec<_>>(), brute);
        }

        #[test]
        fn r_frame_emits_offset_slices(seed in any::<u64>(), t in 45usize..120) {
            let seq = ramp(t, 2);
            let cfg = WindowConfig::new(30.0, 0.5).unwrap();
            let mut rng = RngStream::new(seed);
            let set = r_frame_epoch(std::slice::from_ref(&seq), &cfg, &mut rng, RFrameOptions::default(), 0).unwrap();
            let delta = set.offset_used.unwrap();
            for f in &set.frames {
                prop_assert!(f.origin.start >= delta);
                prop_assert_eq!(&*f.values, seq.rows(f.origin.start, 30));
            }
        }
    }
}
