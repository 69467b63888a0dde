use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::ModelParams;
use crate::model_file;
use crate::{Error, Result};

pub const INDEX_FILE: &str = "index.json";

/// One training epoch's snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochModel {
    /// 1-based.
    pub epoch: usize,
    pub params: ModelParams,
    pub validation_f1: f64,
    pub train_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub validation_f1: f64,
    pub train_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub config_hash: String,
    pub seed: u64,
    pub records: Vec<EpochRecord>,
}

#[derive(Clone, Debug)]
enum Backing {
    Memory(Vec<ModelParams>),
    Disk(PathBuf),
}

/// Epoch snapshots in epoch order, held in memory or as one model file per
/// epoch plus an index file.
#[derive(Clone, Debug)]
pub struct EpochModelStore {
    index: StoreIndex,
    backing: Backing,
}

impl EpochModelStore {
    pub fn in_memory(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            index: StoreIndex {
                config_hash: config_hash.into(),
                seed,
                records: Vec::new(),
            },
            backing: Backing::Memory(Vec::new()),
        }
    }

    /// New empty store in `dir` (created if needed). Fails if `dir` already
    /// holds an index.
    pub fn create(dir: &Path, config_hash: impl Into<String>, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let index_path = dir.join(INDEX_FILE);
        if index_path.exists() {
            return Err(Error::Config(format!("{} already exists", index_path.display())));
        }
        let store = Self {
            index: StoreIndex {
                config_hash: config_hash.into(),
                seed,
                records: Vec::new(),
            },
            backing: Backing::Disk(dir.to_path_buf()),
        };
        store.write_index()?;
        Ok(store)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(INDEX_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: StoreIndex = serde_json::from_str(&text)
            .map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
        for (i, r) in index.records.iter().enumerate() {
            if r.epoch != i + 1 {
                return Err(Error::Corrupt(format!(
                    "{}: epochs are not dense from 1",
                    path.display()
                )));
            }
        }
        Ok(Self {
            index,
            backing: Backing::Disk(dir.to_path_buf()),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        match &self.backing {
            Backing::Disk(d) => Some(d),
            Backing::Memory(_) => None,
        }
    }

    pub fn snapshot_path(dir: &Path, epoch: usize) -> PathBuf {
        dir.join(format!("epoch_{epoch:03}.cvb"))
    }

    pub fn config_hash(&self) -> &str {
        &self.index.config_hash
    }

    pub fn seed(&self) -> u64 {
        self.index.seed
    }

    pub fn index(&self) -> &StoreIndex {
        &self.index
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.index.records
    }

    pub fn len(&self) -> usize {
        self.index.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.records.is_empty()
    }

    pub fn record(&self, epoch: usize) -> Option<&EpochRecord> {
        epoch.checked_sub(1).and_then(|i| self.index.records.get(i))
    }

    /// Appends the next epoch; on disk the snapshot is written before the
    /// index is updated.
    pub fn push(&mut self, model: EpochModel) -> Result<()> {
        let expected = self.len() + 1;
        if model.epoch != expected {
            return Err(Error::OutOfRange(format!(
                "store expects epoch {expected}, got {}",
                model.epoch
            )));
        }
        if !(0.0..=1.0).contains(&model.validation_f1) {
            return Err(Error::OutOfRange(format!(
                "validation F1 {} outside [0, 1]",
                model.validation_f1
            )));
        }
        match &mut self.backing {
            Backing::Memory(models) => models.push(model.params),
            Backing::Disk(dir) => model_file::save(&model.params, &Self::snapshot_path(dir, model.epoch))?,
        }
        self.index.records.push(EpochRecord {
            epoch: model.epoch,
            validation_f1: model.validation_f1,
            train_loss: model.train_loss,
        });
        if matches!(self.backing, Backing::Disk(_)) {
            self.write_index()?;
        }
        Ok(())
    }

    pub fn load(&self, epoch: usize) -> Result<ModelParams> {
        if self.record(epoch).is_none() {
            return Err(Error::OutOfRange(format!(
                "epoch {epoch} not in store of {} snapshots",
                self.len()
            )));
        }
        match &self.backing {
            Backing::Memory(models) => Ok(models[epoch - 1].clone()),
            Backing::Disk(dir) => model_file::load(&Self::snapshot_path(dir, epoch)),
        }
    }

    fn write_index(&self) -> Result<()> {
        if let Backing::Disk(dir) = &self.backing {
            let path = dir.join(INDEX_FILE);
            let text = serde_json::to_string_pretty(&self.index).expect("index serializes");
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
