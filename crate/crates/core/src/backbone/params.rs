use rand_distr::{Distribution, Normal};

use super::config::{CnnConfig, TensorSpec};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Complete parameter state of one CNN.
///
/// The flat view concatenates, in order: for each conv layer `i`,
/// `conv{i}.weight [maps, in_channels, kernel]`, `conv{i}.bias`,
/// `norm{i}.scale`, `norm{i}.shift`; then for each hidden layer `j`,
/// `fc{j}.weight [out, in]`, `fc{j}.bias`; then `out.weight`, `out.bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: CnnConfig,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn from_flat(config: CnnConfig, values: Vec<f64>) -> Result<Self> {
        let expected = config.layout()?.total;
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "{} parameters for a config that needs {expected}",
                values.len()
            )));
        }
        Ok(Self { config, values })
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases, unit norm
    /// scales and zero shifts. Weights are drawn in flat-view order.
    pub fn init(config: &CnnConfig, rng: &mut RngStream) -> Result<Self> {
        let layout = config.layout()?;
        let mut values = vec![0.0; layout.total];
        for spec in &layout.tensors {
            let slot = &mut values[spec.offset..spec.offset + spec.len];
            if spec.name.ends_with(".weight") {
                let fan_in: usize = spec.shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                    .map_err(|e| Error::Config(e.to_string()))?;
                slot.iter_mut().for_each(|w| *w = normal.sample(rng));
            } else if spec.name.ends_with(".scale") {
                slot.fill(1.0);
            }
        }
        Ok(Self {
            config: config.clone(),
            values,
        })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.config
    }

    pub fn flat_view(&self) -> &[f64] {
        &self.values
    }

    pub fn flat_view_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }

    pub fn tensors(&self) -> impl Iterator<Item = (TensorSpec, &[f64])> {
        self.config
            .tensor_specs()
            .into_iter()
            .map(move |s| {
                let slice = &self.values[s.offset..s.offset + s.len];
                (s, slice)
            })
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.config
            .tensor_specs()
            .into_iter()
            .find(|s| s.name == name)
            .map(|s| &self.values[s.offset..s.offset + s.len])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let spec = self.config.tensor_specs().into_iter().find(|s| s.name == name)?;
        Some(&mut self.values[spec.offset..spec.offset + spec.len])
    }
}
