//! Data augmentation layer: mix-up virtual frames, the R-Frame* extra batch,
//! and the scaling booster.

use rand::seq::SliceRandom;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::batch::{BatchValues, FrameBatch, MixedBatch};
use crate::data::ClassId;
use crate::rng::RngStream;
use crate::{Error, Result};

/// Beta(α, α) parameter for the mixing ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixupConfig {
    pub alpha: f64,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self { alpha: 0.8 }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("mixup alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn sample_lambda(&self, rng: &mut RngStream) -> Result<f64> {
        let beta = Beta::new(self.alpha, self.alpha)
            .map_err(|e| Error::Config(format!("mixup alpha {}: {e}", self.alpha)))?;
        Ok(beta.sample(rng))
    }
}

/// Draws one λ ~ Beta(α, α) and a uniform permutation π of the batch, then
/// replaces every frame with `λ·x_i + (1-λ)·x_π(i)`.
pub fn mixup_batch(batch: &FrameBatch, cfg: &MixupConfig, rng: &mut RngStream) -> Result<MixedBatch> {
    if batch.is_empty() {
        return Err(Error::Empty("cannot mix an empty batch".into()));
    }
    cfg.validate()?;
    let lambda = cfg.sample_lambda(rng)?;
    let mut partner: Vec<usize> = (0..batch.len()).collect();
    partner.shuffle(rng);
    mixup_with(batch, lambda, &partner)
}

/// Mix-up with an explicit ratio and pairing.
pub fn mixup_with(batch: &FrameBatch, lambda: f64, partner: &[usize]) -> Result<MixedBatch> {
    check_lambda(lambda)?;
    if partner.len() != batch.len() || partner.iter().any(|&j| j >= batch.len()) {
        return Err(Error::Shape(format!(
            "pairing of length {} for a batch of {}",
            partner.len(),
            batch.len()
        )));
    }
    let other = 1.0 - lambda;
    let mut values = Vec::with_capacity(batch.values.len());
    for (i, &j) in partner.iter().enumerate() {
        values.extend(
            batch
                .frame(i)
                .iter()
                .zip(batch.frame(j))
                .map(|(a, b)| lambda * a + other * b),
        );
    }
    Ok(MixedBatch {
        values,
        label_a: batch.labels.clone(),
        label_b: partner.iter().map(|&j| batch.labels[j]).collect(),
        lambda,
        length: batch.length,
        channels: batch.channels,
    })
}

/// R-Frame*: an additional mix-up pass over the same (R-Frame) batch with an
/// independent ratio and pairing; the caller trains on both mixed batches.
pub fn r_frame_star(batch: &FrameBatch, cfg: &MixupConfig, rng: &mut RngStream) -> Result<MixedBatch> {
    mixup_batch(batch, cfg, rng)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::OutOfRange(format!("mixing ratio {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// Loss weights `(w_a, w_b)` for a mixing ratio. The larger weight is
/// computed as the exact complement of the smaller-or-equal one's partner, so
/// `(a, b, λ)` and `(b, a, 1-λ)` produce bitwise-identical weights.
pub fn mix_weights(lambda: f64) -> (f64, f64) {
    if lambda >= 0.5 {
        (lambda, 1.0 - lambda)
    } else {
        let w_b = 1.0 - lambda;
        (1.0 - w_b, w_b)
    }
}

/// `λ·CE(p, a) + (1-λ)·CE(p, b)` with `CE(p, y) = -ln p_y`; plain `CE(p, a)`
/// when `a = b`.
pub fn mixup_loss(probs: &[f64], label_a: ClassId, label_b: ClassId, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if label_a >= probs.len() || label_b >= probs.len() {
        return Err(Error::OutOfRange(format!(
            "labels ({label_a}, {label_b}) for {} classes",
            probs.len()
        )));
    }
    if label_a == label_b {
        return Ok(-probs[label_a].ln());
    }
    let (w_a, w_b) = mix_weights(lambda);
    let term = |w: f64, y: ClassId| if w == 0.0 { 0.0 } else { -w * probs[y].ln() };
    Ok(term(w_a, label_a) + term(w_b, label_b))
}

/// Default σ of the scaling booster.
pub const DEFAULT_SCALING_SIGMA: f64 = 0.1;
const SCALE_MIN: f64 = 0.5;
const SCALE_MAX: f64 = 1.5;

/// Multiplies every channel of every frame by its own factor
/// `s ~ Normal(1, σ²)`, clamped to `[0.5, 1.5]`.
pub fn scale_batch<B: BatchValues>(batch: &mut B, sigma: f64, rng: &mut RngStream) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!("scaling sigma must be > 0, got {sigma}")));
    }
    let normal = Normal::new(1.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let (n, _, c) = batch.dims();
    let factors: Vec<f64> = (0..n * c)
        .map(|_| normal.sample(rng).clamp(SCALE_MIN, SCALE_MAX))
        .collect();
    scale_with_factors(batch, &factors)
}

/// Scaling with explicit factors, one per `(frame, channel)`.
pub fn scale_with_factors<B: BatchValues>(batch: &mut B, factors: &[f64]) -> Result<()> {
    let (n, l, c) = batch.dims();
    if factors.len() != n * c {
        return Err(Error::Shape(format!("{} factors for {n} frames x {c} channels", factors.len())));
    }
    for (i, v) in batch.values_mut().iter_mut().enumerate() {
        let frame = i / (l * c);
        *v *= factors[frame * c + i % c];
    }
    Ok(())
}

/// Draws `count` scaling factors exactly as [`scale_batch`] does.
pub fn sample_scale_factors(sigma: f64, count: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let normal = Normal::new(1.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..count)
        .map(|_| normal.sample(rng).clamp(SCALE_MIN, SCALE_MAX))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch(values: Vec<f64>, labels: Vec<usize>, length: usize, channels: usize) -> FrameBatch {
        FrameBatch {
            values,
            labels,
            length,
            channels,
        }
    }

    #[test]
    fn lambda_one_is_identity() {
        let b = batch(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0, 1, 2], 2, 1);
        let m = mixup_with(&b, 1.0, &[2, 0, 1]).unwrap();
        assert_eq!(m.values, b.values);
        assert_eq!(m.label_a, b.labels);
        assert_eq!(m.label_b, vec![2, 0, 1]);
    }

    #[test]
    fn interpolation_arithmetic() {
        let b = batch(vec![0.0, 2.0, 2.0, 0.0], vec![0, 1], 2, 1);
        let m = mixup_with(&b, 0.25, &[1, 0]).unwrap();
        assert_eq!(m.frame(0), &[1.5, 0.5]);
        assert_eq!(m.label_b, vec![1, 0]);
    }

    #[test]
    fn mixup_keeps_batch_size_and_rejects_empty() {
        let b = batch(vec![0.0; 12], vec![0, 1, 0], 2, 2);
        let mut rng = RngStream::new(1);
        let m = mixup_batch(&b, &MixupConfig::default(), &mut rng).unwrap();
        assert_eq!(m.len(), 3);
        assert!((0.0..=1.0).contains(&m.lambda));
        let empty = batch(vec![], vec![], 2, 2);
        assert!(mixup_batch(&empty, &MixupConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn beta_sampler_moments() {
        let cfg = MixupConfig { alpha: 0.8 };
        let mut rng = RngStream::new(2024);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| cfg.sample_lambda(&mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        let expected = 1.0 / (4.0 * (2.0 * 0.8 + 1.0));
        assert!((var / expected - 1.0).abs() < 0.05, "var {var} vs {expected}");
    }

    #[test]
    fn loss_endpoints_and_arithmetic() {
        let p = [0.2, 0.5, 0.3];
        assert_eq!(mixup_loss(&p, 1, 2, 1.0).unwrap(), -(0.5f64).ln());
        // CE_a = 2, CE_b = 1
        let q = [(-2.0f64).exp(), (-1.0f64).exp(), 0.0];
        let l = mixup_loss(&q, 0, 1, 0.3).unwrap();
        assert!((l - 1.3).abs() < 1e-12);
        for lambda in [0.0, 0.17, 0.5, 0.93] {
            assert_eq!(mixup_loss(&p, 2, 2, lambda).unwrap(), -(0.3f64).ln());
        }
        assert!(mixup_loss(&p, 0, 1, 1.5).is_err());
        assert!(mixup_loss(&p, 0, 1, -0.1).is_err());
    }

    #[test]
    fn r_frame_star_with_unit_lambda_duplicates() {
        let b = batch(vec![1.0, 2.0, 3.0, 4.0], vec![0, 1], 1, 2);
        let base = mixup_with(&b, 1.0, &[1, 0]).unwrap();
        let extra = mixup_with(&b, 1.0, &[0, 1]).unwrap();
        assert_eq!(base.values, extra.values);
        let mut rng = RngStream::new(8);
        let star = r_frame_star(&b, &MixupConfig::default(), &mut rng).unwrap();
        assert_eq!(star.len(), b.len());
    }

    #[test]
    fn scaling_identity_and_definition() {
        let mut b = batch(vec![1.0; 8], vec![0, 1], 2, 2);
        let orig = b.clone();
        scale_with_factors(&mut b, &[1.0; 4]).unwrap();
        assert_eq!(b, orig);
        scale_with_factors(&mut b, &[2.0; 4]).unwrap();
        assert!(b.values.iter().all(|&v| v == 2.0));
        let mut b = batch(vec![1.0; 8], vec![0, 1], 2, 2);
        scale_with_factors(&mut b, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(b.values, vec![1.0, 3.0, 1.0, 3.0, 5.0, 7.0, 5.0, 7.0]);
        let mut rng = RngStream::new(0);
        assert!(scale_batch(&mut b, 0.0, &mut rng).is_err());
    }

    #[test]
    fn scaling_factor_mean() {
        let mut rng = RngStream::new(77);
        let f = sample_scale_factors(0.1, 100_000, &mut rng).unwrap();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        assert!((mean - 1.0).abs() < 0.01);
        assert!(f.iter().all(|&s| (0.5..=1.5).contains(&s)));
    }

    #[test]
    fn scaling_applies_to_mixed_batches() {
        let b = batch(vec![1.0, 1.0], vec![0, 0], 1, 1);
        let mut m = mixup_with(&b, 0.5, &[1, 0]).unwrap();
        let mut rng = RngStream::new(3);
        scale_batch(&mut m, 0.1, &mut rng).unwrap();
        assert!(m.values.iter().all(|&v| (0.5..=1.5).contains(&v)));
    }

    proptest! {
        #[test]
        fn mixed_values_are_convex(
            xs in prop::collection::vec(-10.0f64..10.0, 12),
            lambda in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let b = batch(xs, vec![0, 1, 2, 0], 3, 1);
            let mut perm = vec![0usize, 1, 2, 3];
            perm.shuffle(&mut RngStream::new(seed));
            let m = mixup_with(&b, lambda, &perm).unwrap();
            for i in 0..4 {
                for t in 0..3 {
                    let (a, c) = (b.frame(i)[t], b.frame(perm[i])[t]);
                    let v = m.frame(i)[t];
                    prop_assert!(v >= a.min(c) - 1e-12 && v <= a.max(c) + 1e-12);
                }
            }
        }

        #[test]
        fn loss_symmetry_is_exact(
            raw in prop::collection::vec(0.01f64..1.0, 4),
            a in 0usize..4, b in 0usize..4,
            lambda in 0.0f64..=1.0,
        ) {
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let l1 = mixup_loss(&p, a, b, lambda).unwrap();
            let l2 = mixup_loss(&p, b, a, 1.0 - lambda).unwrap();
            prop_assert_eq!(l1.to_bits(), l2.to_bits());
            prop_assert!(l1 >= 0.0);
        }
    }
}
