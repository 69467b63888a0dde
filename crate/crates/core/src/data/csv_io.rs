use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SensorSequence;
use crate::{Error, Result};

/// Column mapping for a sensor CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label_column: String,
    /// Channel columns in order. `None` takes every non-label column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_columns: Option<Vec<String>>,
    pub sampling_rate: f64,
}

/// Reads one sequence from a headed CSV file. The sequence id is the file stem.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<SensorSequence> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, 0, e))?
        .clone();

    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let label_idx = find(&schema.label_column)?;
    let channel_idx: Vec<usize> = match &schema.channel_columns {
        Some(cols) => cols.iter().map(|c| find(c)).collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&i| i != label_idx).collect(),
    };
    if channel_idx.is_empty() {
        return Err(Error::Data(format!(
            "{}: no channel columns besides the label",
            path.display()
        )));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, row, e))?;
        let cell = |idx: usize| record.get(idx).unwrap_or("");
        for &c in &channel_idx {
            let text = cell(c);
            let v: f64 = text.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row,
                column: headers[c].to_string(),
                message: format!("'{text}' is not a real number"),
            })?;
            values.push(v);
        }
        let text = cell(label_idx);
        let label: usize = text.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            row,
            column: headers[label_idx].to_string(),
            message: format!("'{text}' is not a nonnegative integer label"),
        })?;
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Empty(format!("{}: no data rows", path.display())));
    }

    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SensorSequence::new(id, values, channel_idx.len(), labels, schema.sampling_rate)
}

/// Writes `seq` with channel columns `ch0..` followed by a `label` column.
/// Reals use the shortest representation that parses back to the same bits.
pub fn write_csv(seq: &SensorSequence, path: &Path) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..seq.channels()).map(|c| format!("ch{c}")).collect();
    out.push_str(&header.join(","));
    out.push_str(",label\n");
    for t in 0..seq.len() {
        for v in seq.row(t) {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&seq.labels()[t].to_string());
        out.push('\n');
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, row: usize, err: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        column: String::new(),
        message: err.to_string(),
    }
}
