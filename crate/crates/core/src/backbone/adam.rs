use crate::{Error, Result};

/// Adam moments and hyperparameters for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grad.len() != params.len() {
            return Err(Error::Shape(format!(
                "adam state for {} parameters, got {} parameters and {} gradients",
                self.first_moment.len(),
                params.len(),
                grad.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            params[i] -= self.learning_rate * (m / c1) / ((v / c2).sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = vec![0.3, -1.0, 2.5];
        let orig = p.clone();
        let mut adam = AdamState::new(3, 1e-3);
        for _ in 0..5 {
            adam.update(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, orig);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // bias correction makes the first step lr * sign(g) (up to epsilon)
        let mut p = vec![1.0, 1.0];
        let mut adam = AdamState::new(2, 1e-3);
        adam.update(&mut p, &[0.5, -4.0]).unwrap();
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn matches_hand_rolled_second_step() {
        let mut p = vec![0.0];
        let mut adam = AdamState::new(1, 0.1);
        adam.update(&mut p, &[1.0]).unwrap();
        adam.update(&mut p, &[2.0]).unwrap();
        let m = 0.9 * 0.1 + 0.1 * 2.0;
        let v = 0.999 * 0.001 + 0.001 * 4.0;
        let step2 = 0.1 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        let step1 = 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] + step1 + step2).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let mut adam = AdamState::new(2, 1e-3);
        assert!(adam.update(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
