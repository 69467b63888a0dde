//! Command implementations, independent of argument parsing.

use std::path::{Path, PathBuf};
use std::time::Instant;

use convboost_core::analysis::{
    confusion_matrix, cosine_similarity_matrix, ensemble_qs, expected_base_f1, t_test, CorrectnessVector, SignificanceResult,
};
use convboost_core::backbone::{Backbone, Cnn, Evaluation, ModelParams};
use convboost_core::data::DatasetBundle;
use convboost_core::ensemble::{
    compress_average, fuse_predict, select_top_m, train_convboost_into, EnsembleSelection, EpochModelStore, SelectionMode,
};
use convboost_core::model_file;
use convboost_core::sampling::{frame_split, FrameSet};
use convboost_core::Error as CoreError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset::load_normalized;
use crate::error::{CliError, CliResult};
use crate::results::{DiversityReport, ModeResult, RepStatus, RepetitionResult, ResultsFile, Timing, RESULTS_FILE};

pub const CONFIG_FILE: &str = "config.toml";
pub const THREADS_ENV: &str = "CONVBOOST_THREADS";

pub fn rep_dir(run: &Path, repetition: usize) -> PathBuf {
    run.join(format!("rep_{repetition:02}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn frames(&self, data: &DatasetBundle, cfg: &ExperimentConfig) -> CliResult<FrameSet> {
        let seqs = match self {
            Split::Validation => &data.validation,
            Split::Test => &data.test,
        };
        let frames = frame_split(seqs, &cfg.window)?;
        if frames.is_empty() {
            return Err(CoreError::Empty(format!("no {} frames", self.as_str())).into());
        }
        Ok(frames)
    }
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a non-negative integer, got '{v}'")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

pub struct TrainOutcome {
    pub results: ResultsFile,
    /// Error of the first failed repetition, if any.
    pub first_error: Option<CliError>,
}

impl TrainOutcome {
    pub fn all_failed(&self) -> bool {
        self.results.repetitions.iter().all(|r| r.status == RepStatus::Failed)
    }
}

/// Runs every repetition into `out` and writes the config copy and results file.
pub fn train(cfg: &ExperimentConfig, out: &Path) -> CliResult<TrainOutcome> {
    cfg.validate()?;
    for name in [RESULTS_FILE, CONFIG_FILE] {
        let p = out.join(name);
        if p.exists() {
            return Err(CliError::Config(format!("{} already exists; choose a fresh output directory", p.display())));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let out = out.canonicalize().map_err(|e| CliError::io(out, e))?;
    let mut saved = cfg.clone();
    saved.run.output_dir = out.clone();
    let config_path = out.join(CONFIG_FILE);
    std::fs::write(&config_path, saved.to_toml()).map_err(|e| CliError::io(&config_path, e))?;

    let start = Instant::now();
    let data = load_normalized(&cfg.data)?;
    let hash = cfg.hash();
    let pool = thread_pool()?;
    let outcomes: Vec<(RepetitionResult, f64, Option<CliError>)> = pool.install(|| {
        (0..cfg.run.repetitions)
            .into_par_iter()
            .map(|r| {
                let seed = cfg.run.seed + r as u64;
                let t0 = Instant::now();
                let result = train_repetition(cfg, &data, &hash, r, seed, &rep_dir(&out, r));
                let secs = t0.elapsed().as_secs_f64();
                match result {
                    Ok(rep) => {
                        log::info!("repetition {r} (seed {seed}) done in {secs:.1}s");
                        (rep, secs, None)
                    }
                    Err(e) => {
                        log::warn!("repetition {r} (seed {seed}) failed: {e}");
                        (RepetitionResult::failed(r, seed, e.to_string()), secs, Some(e))
                    }
                }
            })
            .collect()
    });

    let mut reps = Vec::new();
    let mut timing = Timing::default();
    let mut first_error = None;
    for (rep, secs, err) in outcomes {
        reps.push(rep);
        timing.repetition_seconds.push(secs);
        if first_error.is_none() {
            first_error = err;
        }
    }
    timing.total_seconds = start.elapsed().as_secs_f64();
    let results = ResultsFile::new(hash, cfg.train.ensemble_size, cfg.train.epochs, reps, timing);
    results.save(&out.join(RESULTS_FILE))?;
    Ok(TrainOutcome { results, first_error })
}

fn train_repetition(
    cfg: &ExperimentConfig,
    data: &DatasetBundle,
    hash: &str,
    repetition: usize,
    seed: u64,
    dir: &Path,
) -> CliResult<RepetitionResult> {
    let mut store = EpochModelStore::create(dir, hash, seed)?;
    train_convboost_into(data, &cfg.train_run(seed), &mut store)?;
    let test = Split::Test.frames(data, cfg)?;
    let m = cfg.train.ensemble_size;
    Ok(RepetitionResult {
        repetition,
        seed,
        status: RepStatus::Ok,
        error: None,
        single_best: Some(evaluate_run(&store, &test, data.num_classes, SelectionMode::SingleBest, 1, Split::Test)?),
        ensemble: Some(evaluate_run(&store, &test, data.num_classes, SelectionMode::Ensemble, m, Split::Test)?),
        compressed: Some(evaluate_run(&store, &test, data.num_classes, SelectionMode::Compressed, m, Split::Test)?),
        diversity: Some(diversity(&store, &select_top_m(&store, m)?, &test, Split::Test)?),
    })
}

fn score(eval: &Evaluation, frames: &FrameSet, num_classes: usize) -> CliResult<convboost_core::analysis::ConfusionMatrix> {
    Ok(confusion_matrix(&eval.predictions, &frames.labels(), num_classes)?)
}

/// Scores one way of using a run's snapshots. Single-Best always takes the
/// top snapshot; the other modes take the top `m`.
pub fn evaluate_run(
    store: &EpochModelStore,
    frames: &FrameSet,
    num_classes: usize,
    mode: SelectionMode,
    m: usize,
    split: Split,
) -> CliResult<ModeResult> {
    let m = if mode == SelectionMode::SingleBest { 1 } else { m };
    let sel = select_top_m(store, m)?;
    let eval = match mode {
        SelectionMode::SingleBest => evaluate_params(&store.load(sel.epochs[0])?, frames)?,
        SelectionMode::Ensemble => fuse_predict(store, &sel, frames)?,
        SelectionMode::Compressed => evaluate_params(&compress_average(store, &sel)?, frames)?,
    };
    Ok(ModeResult::new(mode, sel.epochs, split.as_str(), &score(&eval, frames, num_classes)?))
}

pub fn evaluate_params(params: &ModelParams, frames: &FrameSet) -> CliResult<Evaluation> {
    Ok(Cnn::new(params.config().clone())?.evaluate(params, frames)?)
}

/// Scores a standalone model file after checking it fits the data.
pub fn evaluate_model(
    params: &ModelParams,
    cfg: &ExperimentConfig,
    data: &DatasetBundle,
    mode: SelectionMode,
    split: Split,
) -> CliResult<ModeResult> {
    let expected = cfg.train_run(cfg.run.seed).cnn_config(data)?;
    if params.config() != &expected {
        return Err(CoreError::Mismatch(format!(
            "model expects {:?}, config and data give {:?}",
            params.config(),
            expected
        ))
        .into());
    }
    let frames = split.frames(data, cfg)?;
    let eval = evaluate_params(params, &frames)?;
    Ok(ModeResult::new(mode, Vec::new(), split.as_str(), &score(&eval, &frames, data.num_classes)?))
}

/// QS over test correctness, CS over flat parameters and member F1 for `sel`.
pub fn diversity(store: &EpochModelStore, sel: &EnsembleSelection, frames: &FrameSet, split: Split) -> CliResult<DiversityReport> {
    let labels = frames.labels();
    let mut params = Vec::with_capacity(sel.epochs.len());
    let mut correct = Vec::with_capacity(sel.epochs.len());
    for &epoch in &sel.epochs {
        let p = store.load(epoch)?;
        let eval = evaluate_params(&p, frames)?;
        correct.push(CorrectnessVector::from_predictions(&eval.predictions, &labels)?);
        params.push(p);
    }
    let qs = ensemble_qs(&correct)?;
    let cs = cosine_similarity_matrix(&params.iter().collect::<Vec<_>>())?;
    Ok(DiversityReport {
        selection: sel.epochs.clone(),
        split: split.as_str().to_string(),
        qs_all_pairs: qs.all_pairs,
        qs_off_diagonal: qs.off_diagonal,
        qs_degenerate_pairs: qs.degenerate_pairs,
        cs_matrix: cs.matrix,
        cs_mean: cs.mean_off_diagonal,
        cs_zero_norm: cs.zero_norm,
        base_f1: expected_base_f1(store, sel, frames)?,
    })
}

/// A finished repetition's store, with its config.
pub struct RunHandle {
    pub config: ExperimentConfig,
    pub store: EpochModelStore,
    pub data: DatasetBundle,
}

impl RunHandle {
    /// Opens `rep_XX` under `run`. `config` overrides the run's own config copy.
    pub fn open(run: &Path, repetition: usize, config: Option<&Path>) -> CliResult<Self> {
        let config_path = config.map(Path::to_path_buf).unwrap_or_else(|| run.join(CONFIG_FILE));
        let config = ExperimentConfig::load(&config_path)?;
        let dir = rep_dir(run, repetition);
        if !dir.is_dir() {
            return Err(CliError::Incomplete(format!("{} does not exist", dir.display())));
        }
        let store = EpochModelStore::open(&dir)?;
        if store.len() < config.train.epochs {
            return Err(CliError::Incomplete(format!(
                "{} holds {} of {} epochs",
                dir.display(),
                store.len(),
                config.train.epochs
            )));
        }
        let data = load_normalized(&config.data)?;
        if let Some(first) = store.records().first() {
            let expected = config.train_run(store.seed()).cnn_config(&data)?;
            if store.load(first.epoch)?.config() != &expected {
                return Err(CoreError::Mismatch(format!("{} was trained on a different network or data shape", dir.display())).into());
            }
        }
        Ok(Self { config, store, data })
    }

    pub fn members(&self, m: Option<usize>) -> usize {
        m.unwrap_or(self.config.train.ensemble_size)
    }

    pub fn frames(&self, split: Split) -> CliResult<FrameSet> {
        split.frames(&self.data, &self.config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressReport {
    pub path: PathBuf,
    pub selection: Vec<usize>,
    pub bytes: u64,
    /// Total size of the selected snapshot files.
    pub snapshot_bytes: u64,
    pub ratio: f64,
}

pub fn compress(run: &RunHandle, m: usize, out: &Path) -> CliResult<CompressReport> {
    let sel = select_top_m(&run.store, m)?;
    let params = compress_average(&run.store, &sel)?;
    model_file::save(&params, out)?;
    let size = |p: &Path| std::fs::metadata(p).map(|m| m.len()).map_err(|e| CliError::io(p, e));
    let dir = run.store.dir().expect("run stores live on disk");
    let mut snapshot_bytes = 0;
    for &epoch in &sel.epochs {
        snapshot_bytes += size(&EpochModelStore::snapshot_path(dir, epoch))?;
    }
    let bytes = size(out)?;
    Ok(CompressReport {
        path: out.to_path_buf(),
        selection: sel.epochs,
        bytes,
        snapshot_bytes,
        ratio: bytes as f64 / snapshot_bytes as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub mode: SelectionMode,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub mean_a: f64,
    pub mean_b: f64,
    #[serde(flatten)]
    pub test: SignificanceResult,
}

/// Two-tailed t-test on the per-repetition F1 of `mode` in two results files.
pub fn stats(a: &ResultsFile, b: &ResultsFile, mode: SelectionMode) -> CliResult<StatsReport> {
    let (xa, xb) = (a.samples(mode), b.samples(mode));
    for (name, x) in [("first", &xa), ("second", &xb)] {
        if x.len() < 2 {
            return Err(CoreError::Data(format!(
                "{name} results file has {} successful repetitions for mode {}; need at least 2",
                x.len(),
                mode.as_str()
            ))
            .into());
        }
    }
    let test = t_test(&xa, &xb)?;
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    Ok(StatsReport {
        mode,
        mean_a: mean(&xa),
        mean_b: mean(&xb),
        a: xa,
        b: xb,
        test,
    })
}
