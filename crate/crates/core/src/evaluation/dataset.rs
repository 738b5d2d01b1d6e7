use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Example, LabelSpace, SentimentLabel};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("row {row}, column {column}: {message}")]
    Parse { row: usize, column: String, message: String },
    #[error("row {row}: label {raw:?} is not in the label map")]
    UnknownLabel { row: usize, raw: String },
    #[error("label map sends {raw:?} to {label:?}, which is not in the label space")]
    BadLabelMap { raw: String, label: String },
    #[error("unknown dataset {0:?}")]
    UnknownName(String),
    #[error("unknown dataset format {0:?}")]
    UnknownFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Sst2,
    Mr,
    Twitter,
    Yelp2,
    Amazon2,
    Imdb,
}

impl DatasetName {
    pub const ALL: [DatasetName; 6] = [Self::Sst2, Self::Mr, Self::Twitter, Self::Yelp2, Self::Amazon2, Self::Imdb];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sst2 => "sst2",
            Self::Mr => "mr",
            Self::Twitter => "twitter",
            Self::Yelp2 => "yelp2",
            Self::Amazon2 => "amazon2",
            Self::Imdb => "imdb",
        }
    }

    /// Heading used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::Sst2 => "SST-2",
            Self::Mr => "MR",
            Self::Twitter => "Twitter",
            Self::Yelp2 => "Yelp-2",
            Self::Amazon2 => "Amazon-2",
            Self::Imdb => "IMDB",
        }
    }

    pub fn label_space(self) -> LabelSpace {
        match self {
            Self::Twitter => LabelSpace::ternary(),
            _ => LabelSpace::binary(),
        }
    }

    /// Raw values accepted in normalized files: the canonical names plus the
    /// usual numeric codes.
    pub fn default_label_map(self) -> BTreeMap<String, String> {
        let mut map: BTreeMap<String, String> = [("positive", "positive"), ("negative", "negative")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        match self {
            Self::Twitter => {
                map.insert("neutral".into(), "neutral".into());
                map.insert("1".into(), "positive".into());
                map.insert("0".into(), "neutral".into());
                map.insert("-1".into(), "negative".into());
            }
            _ => {
                map.insert("1".into(), "positive".into());
                map.insert("0".into(), "negative".into());
            }
        }
        map
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s.to_lowercase())
            .ok_or_else(|| DatasetError::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Tsv,
    Csv,
    Jsonl,
}

impl DatasetFormat {
    /// Guess from the file extension, defaulting to TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_lowercase).as_deref() {
            Some("csv") => Self::Csv,
            Some("jsonl") | Some("json") => Self::Jsonl,
            _ => Self::Tsv,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "tsv" => Ok(Self::Tsv),
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            _ => Err(DatasetError::UnknownFormat(s.to_string())),
        }
    }
}

/// Where a benchmark's normalized file lives and how to read its labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub path: PathBuf,
    pub format: DatasetFormat,
    pub label_map: BTreeMap<String, String>,
    pub label_space: LabelSpace,
}

impl DatasetSpec {
    pub fn new(name: DatasetName, path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        Self {
            name,
            format: DatasetFormat::from_path(&path),
            path,
            label_map: name.default_label_map(),
            label_space: name.label_space(),
        }
    }

    pub fn with_format(mut self, format: DatasetFormat) -> Self {
        self.format = format;
        self
    }

    pub fn with_label_map(mut self, map: BTreeMap<String, String>) -> Self {
        self.label_map = map;
        self
    }

    fn resolved_map(&self) -> Result<BTreeMap<String, SentimentLabel>, DatasetError> {
        self.label_map
            .iter()
            .map(|(raw, label)| {
                self.label_space
                    .get(label)
                    .map(|l| (raw.trim().to_lowercase(), l))
                    .ok_or_else(|| DatasetError::BadLabelMap {
                        raw: raw.clone(),
                        label: label.clone(),
                    })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Keep only the first `limit` examples (after shuffling, if any).
    pub limit: Option<usize>,
    /// Shuffle with this seed before truncating.
    pub shuffle_seed: Option<u64>,
}

struct RawRow {
    row: usize,
    id: Option<String>,
    text: String,
    label: String,
    topic: Option<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(row: usize, column: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn delimited_rows(path: &Path, delimiter: u8) -> Result<Vec<RawRow>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .quoting(delimiter != b'\t')
        .from_reader(file);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, "*", e.to_string()))?;
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() < 2 {
            return Err(parse_err(row, "label", format!("expected 2 columns, found {}", record.len())));
        }
        let text = record[0].trim();
        let label = record[1].trim();
        if row == 1 && label.eq_ignore_ascii_case("label") {
            continue;
        }
        if text.is_empty() {
            return Err(parse_err(row, "text", "empty text"));
        }
        rows.push(RawRow {
            row,
            id: None,
            text: text.to_string(),
            label: label.to_string(),
            topic: None,
        });
    }
    Ok(rows)
}

#[derive(Deserialize)]
struct JsonRow {
    text: Option<String>,
    label: Option<serde_json::Value>,
    id: Option<serde_json::Value>,
    topic: Option<String>,
}

fn json_scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn jsonl_rows(path: &Path) -> Result<Vec<RawRow>, DatasetError> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: JsonRow = serde_json::from_str(&line).map_err(|e| parse_err(row, "*", e.to_string()))?;
        let text = parsed
            .text
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| parse_err(row, "text", "missing or empty text"))?;
        let label = parsed
            .label
            .as_ref()
            .and_then(json_scalar)
            .ok_or_else(|| parse_err(row, "label", "missing or non-scalar label"))?;
        let id = match &parsed.id {
            None | Some(serde_json::Value::Null) => None,
            Some(v) => Some(json_scalar(v).ok_or_else(|| parse_err(row, "id", "non-scalar id"))?),
        };
        rows.push(RawRow {
            row,
            id,
            text,
            label,
            topic: parsed.topic.filter(|t| !t.trim().is_empty()),
        });
    }
    Ok(rows)
}

/// Reads a normalized dataset file. The first bad row aborts the load with
/// its location.
pub fn load_dataset(spec: &DatasetSpec, options: LoadOptions) -> Result<Vec<Example>, DatasetError> {
    let map = spec.resolved_map()?;
    let rows = match spec.format {
        DatasetFormat::Tsv => delimited_rows(&spec.path, b'\t')?,
        DatasetFormat::Csv => delimited_rows(&spec.path, b',')?,
        DatasetFormat::Jsonl => jsonl_rows(&spec.path)?,
    };
    let mut examples = Vec::with_capacity(rows.len());
    for raw in rows {
        let gold = map
            .get(&raw.label.trim().to_lowercase())
            .cloned()
            .ok_or_else(|| DatasetError::UnknownLabel {
                row: raw.row,
                raw: raw.label.clone(),
            })?;
        let id = raw.id.unwrap_or_else(|| format!("{}:{}", spec.name, raw.row));
        let mut ex = Example::new(id, raw.text)
            .map_err(|e| parse_err(raw.row, "id", e.to_string()))?
            .with_gold(gold);
        if let Some(topic) = raw.topic {
            ex = ex.with_topic(topic);
        }
        examples.push(ex);
    }
    if let Some(seed) = options.shuffle_seed {
        examples.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
    }
    if let Some(limit) = options.limit {
        examples.truncate(limit);
    }
    Ok(examples)
}
