//! Dataset sources and the split manifest written by `synth`.

use std::path::{Path, PathBuf};

use convboost_core::data::{generate_synthetic, load_csv, write_csv, CsvSchema, DatasetBundle, SensorSequence, SyntheticSpec};
use serde::{Deserialize, Serialize};

use crate::config::DataConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Sequence files per split. Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    pub schema: CsvSchema,
    pub train: Vec<PathBuf>,
    pub validation: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Json {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in m.train.iter_mut().chain(m.validation.iter_mut()).chain(m.test.iter_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(m)
    }

    pub fn splits(&self) -> [(&'static str, &[PathBuf]); 3] {
        [("train", &self.train), ("validation", &self.validation), ("test", &self.test)]
    }
}

fn load_split(paths: &[PathBuf], schema: &CsvSchema) -> CliResult<Vec<SensorSequence>> {
    Ok(paths.iter().map(|p| load_csv(p, schema)).collect::<Result<Vec<_>, _>>()?)
}

fn load_files(
    num_classes: usize,
    class_names: Option<Vec<String>>,
    schema: &CsvSchema,
    train: &[PathBuf],
    validation: &[PathBuf],
    test: &[PathBuf],
) -> CliResult<DatasetBundle> {
    Ok(DatasetBundle::new(
        load_split(train, schema)?,
        load_split(validation, schema)?,
        load_split(test, schema)?,
        num_classes,
        class_names,
    )?)
}

/// Raw (unnormalized) splits.
pub fn load_raw(data: &DataConfig) -> CliResult<DatasetBundle> {
    match data {
        DataConfig::Synthetic { seed, spec } => Ok(generate_synthetic(spec, *seed)?),
        DataConfig::Csv {
            num_classes,
            class_names,
            schema,
            train,
            validation,
            test,
        } => load_files(*num_classes, class_names.clone(), schema, train, validation, test),
        DataConfig::Manifest { path } => {
            let m = Manifest::load(path)?;
            load_files(m.num_classes, m.class_names.clone(), &m.schema, &m.train, &m.validation, &m.test)
        }
    }
}

/// Splits normalized with statistics fitted on the training split.
pub fn load_normalized(data: &DataConfig) -> CliResult<DatasetBundle> {
    Ok(load_raw(data)?.normalized()?.0)
}

/// `synth` input: a seed plus the generator parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    #[serde(default)]
    pub seed: u64,
    pub spec: SyntheticSpec,
}

impl SynthFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Writes one CSV per sequence plus a manifest into `dir`.
pub fn write_synthetic(spec: &SyntheticSpec, seed: u64, dir: &Path) -> CliResult<Manifest> {
    let bundle = generate_synthetic(spec, seed)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let write = |seqs: &[SensorSequence]| -> CliResult<Vec<PathBuf>> {
        seqs.iter()
            .map(|s| {
                let name = PathBuf::from(format!("{}.csv", s.id()));
                write_csv(s, &dir.join(&name))?;
                Ok(name)
            })
            .collect()
    };
    let manifest = Manifest {
        num_classes: bundle.num_classes,
        class_names: bundle.class_names.clone(),
        schema: CsvSchema {
            label_column: "label".into(),
            channel_columns: None,
            sampling_rate: spec.sampling_rate,
        },
        train: write(&bundle.train)?,
        validation: write(&bundle.validation)?,
        test: write(&bundle.test)?,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}
