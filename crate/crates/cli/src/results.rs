//! Results file written by `train`.

use std::collections::BTreeMap;
use std::path::Path;

use convboost_core::analysis::{BaseF1, ConfusionMatrix};
use convboost_core::ensemble::SelectionMode;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const RESULTS_FILE: &str = "results.json";

pub const MODES: [SelectionMode; 3] = [SelectionMode::SingleBest, SelectionMode::Ensemble, SelectionMode::Compressed];

/// Test-split scores of one model or ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: SelectionMode,
    /// Epochs of the selected snapshots, best first. Empty for a bare model file.
    pub selection: Vec<usize>,
    pub split: String,
    pub frames: usize,
    pub mean_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub confusion: Vec<Vec<u64>>,
}

impl ModeResult {
    pub fn new(mode: SelectionMode, selection: Vec<usize>, split: &str, cm: &ConfusionMatrix) -> Self {
        Self {
            mode,
            selection,
            split: split.to_string(),
            frames: cm.total() as usize,
            mean_f1: cm.mean_f1(),
            per_class_f1: cm.per_class_f1(),
            confusion: cm.counts.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub selection: Vec<usize>,
    pub split: String,
    /// Mean over all ordered pairs, self-pairs included.
    pub qs_all_pairs: f64,
    /// Mean over distinct pairs; `None` for a single member.
    pub qs_off_diagonal: Option<f64>,
    pub qs_degenerate_pairs: usize,
    pub cs_matrix: Vec<Vec<f64>>,
    /// Mean over distinct pairs; `None` for a single member.
    pub cs_mean: Option<f64>,
    pub cs_zero_norm: Vec<usize>,
    pub base_f1: BaseF1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub seed: u64,
    pub status: RepStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_best: Option<ModeResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<ModeResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compressed: Option<ModeResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diversity: Option<DiversityReport>,
}

impl RepetitionResult {
    pub fn failed(repetition: usize, seed: u64, error: String) -> Self {
        Self {
            repetition,
            seed,
            status: RepStatus::Failed,
            error: Some(error),
            single_best: None,
            ensemble: None,
            compressed: None,
            diversity: None,
        }
    }

    pub fn mode(&self, mode: SelectionMode) -> Option<&ModeResult> {
        match mode {
            SelectionMode::SingleBest => self.single_best.as_ref(),
            SelectionMode::Ensemble => self.ensemble.as_ref(),
            SelectionMode::Compressed => self.compressed.as_ref(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; `None` below two values.
    pub std: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
        let std = mean.filter(|_| n > 1).map(|m| {
            let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Self { n, mean, std }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub repetition_seconds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub config_hash: String,
    pub ensemble_size: usize,
    pub epochs: usize,
    pub repetitions: Vec<RepetitionResult>,
    /// Test mean F1 over successful repetitions, keyed by mode.
    pub summary: BTreeMap<String, Summary>,
    pub timing: Timing,
}

impl ResultsFile {
    pub fn new(config_hash: String, ensemble_size: usize, epochs: usize, repetitions: Vec<RepetitionResult>, timing: Timing) -> Self {
        let mut file = Self {
            config_hash,
            ensemble_size,
            epochs,
            repetitions,
            summary: BTreeMap::new(),
            timing,
        };
        for mode in MODES {
            file.summary.insert(mode.as_str().to_string(), Summary::of(&file.samples(mode)));
        }
        file
    }

    /// Per-repetition mean F1 of `mode`, failed repetitions skipped.
    pub fn samples(&self, mode: SelectionMode) -> Vec<f64> {
        self.repetitions.iter().filter_map(|r| r.mode(mode)).map(|m| m.mean_f1).collect()
    }

    /// Everything except timing, for determinism comparisons.
    pub fn payload(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("results serialize");
        v.as_object_mut().unwrap().remove("timing");
        v
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Json {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("results serialize");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}
