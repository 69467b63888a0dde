//! Experiment configuration file.
//!
//! TOML with one table per concern:
//!
//! ```toml
//! [data]                 # source = "synthetic" | "csv" | "manifest"
//! source = "synthetic"
//! seed = 7
//! [data.spec]            # SyntheticSpec fields
//! ...
//!
//! [window]               # length_seconds, overlap_fraction
//! [train]                # epochs, batch_size, learning_rate, ensemble_size
//! [boosters]             # r_frame, bootstrap, mixup, c_drop, r_frame_star, scaling
//! [mixup]                # alpha
//! [c_drop]               # max_fraction
//! [scaling]              # sigma
//! [cnn]                  # conv_layers, pool_size, fc_layers, dropout_rate, group_norm_groups
//! [run]                  # output_dir, repetitions, seed
//! ```
//!
//! Omitted tables and keys take their defaults, except `[data]` and
//! `[window]`. Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use convboost_core::augment::{MixupConfig, DEFAULT_SCALING_SIGMA};
use convboost_core::backbone::CnnArchitecture;
use convboost_core::data::{CsvSchema, SyntheticSpec, WindowConfig};
use convboost_core::ensemble::{BoosterSwitches, TrainRunConfig};
use convboost_core::resilient::CDropConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    /// Generated in memory from `spec` and `seed`.
    Synthetic { seed: u64, spec: SyntheticSpec },
    /// One CSV file per sequence.
    Csv {
        num_classes: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class_names: Option<Vec<String>>,
        schema: CsvSchema,
        train: Vec<PathBuf>,
        validation: Vec<PathBuf>,
        test: Vec<PathBuf>,
    },
    /// A manifest written by `convboost synth`.
    Manifest { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Ensemble size `M`.
    pub ensemble_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            ensemble_size: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSection {
    pub sigma: f64,
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SCALING_SIGMA,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub output_dir: PathBuf,
    pub repetitions: usize,
    /// Repetition `r` (0-based) trains with seed `seed + r`.
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs/default"),
            repetitions: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub window: WindowConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub boosters: BoosterSwitches,
    #[serde(default)]
    pub mixup: MixupConfig,
    #[serde(default)]
    pub c_drop: CDropConfig,
    #[serde(default)]
    pub scaling: ScalingSection,
    #[serde(default)]
    pub cnn: CnnArchitecture,
    #[serde(default)]
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Parses, resolves relative paths against the file's directory and validates.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataConfig::Synthetic { .. } => {}
            DataConfig::Csv { train, validation, test, .. } => {
                train.iter_mut().chain(validation.iter_mut()).chain(test.iter_mut()).for_each(fix)
            }
            DataConfig::Manifest { path } => fix(path),
        }
        fix(&mut self.run.output_dir);
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.run.repetitions == 0 {
            return Err(CliError::Config("run.repetitions must be >= 1".into()));
        }
        let missing = |p: &Path| -> CliResult<()> {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::Config(format!("data: {} does not exist", p.display())))
            }
        };
        match &self.data {
            DataConfig::Synthetic { spec, .. } => spec.validate()?,
            DataConfig::Csv { train, validation, test, .. } => {
                for p in train.iter().chain(validation).chain(test) {
                    missing(p)?;
                }
            }
            DataConfig::Manifest { path } => missing(path)?,
        }
        self.train_run(self.run.seed).validate()?;
        Ok(())
    }

    pub fn train_run(&self, seed: u64) -> TrainRunConfig {
        TrainRunConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            boosters: self.boosters,
            mixup: self.mixup,
            c_drop: self.c_drop,
            scaling_sigma: self.scaling.sigma,
            window: self.window,
            architecture: self.cnn.clone(),
            learning_rate: self.train.learning_rate,
            seed,
            ensemble_size: self.train.ensemble_size,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form with `run.output_dir` blanked, so
    /// the same experiment written to two places hashes the same.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.output_dir = PathBuf::new();
        let canonical = serde_json::to_string(&serde_json::to_value(&c).expect("config serializes")).unwrap();
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
