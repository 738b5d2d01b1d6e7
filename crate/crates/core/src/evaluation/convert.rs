//! Converters from the original benchmark downloads to normalized files
//! (`text<TAB>label` TSV, or JSONL when a topic column is present).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::dataset::{DatasetError, DatasetName};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    /// GLUE SST-2 `dev.tsv`/`train.tsv` with a `sentence<TAB>label` header.
    GlueTsv,
    /// Directory holding `rt-polarity.pos` and `rt-polarity.neg`.
    RtPolarity,
    /// SemEval tweet files: `id<TAB>label<TAB>text` or `id<TAB>topic<TAB>label<TAB>text`.
    SemevalTsv,
    /// Character-level CNN polarity CSV: `"1"|"2", [title,] text`.
    PolarityCsv,
    /// `aclImdb/test` (or its parent): `pos/*.txt` and `neg/*.txt`.
    AclImdb,
}

impl SourceFormat {
    pub fn default_for(name: DatasetName) -> Self {
        match name {
            DatasetName::Sst2 => Self::GlueTsv,
            DatasetName::Mr => Self::RtPolarity,
            DatasetName::Twitter => Self::SemevalTsv,
            DatasetName::Yelp2 | DatasetName::Amazon2 => Self::PolarityCsv,
            DatasetName::Imdb => Self::AclImdb,
        }
    }
}

impl FromStr for SourceFormat {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "glue-tsv" => Ok(Self::GlueTsv),
            "rt-polarity" => Ok(Self::RtPolarity),
            "semeval-tsv" => Ok(Self::SemevalTsv),
            "polarity-csv" => Ok(Self::PolarityCsv),
            "aclimdb" => Ok(Self::AclImdb),
            _ => Err(DatasetError::UnknownFormat(s.to_string())),
        }
    }
}

struct Row {
    text: String,
    label: &'static str,
    topic: Option<String>,
}

fn clean(text: &str) -> String {
    text.replace("<br />", " ")
        .replace("<br/>", " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse(row: usize, column: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        row,
        column: column.into(),
        message: message.into(),
    }
}

/// Decodes bytes as UTF-8, falling back to Latin-1 (the MR release is Latin-1).
fn decode(bytes: Vec<u8>) -> String {
    String::from_utf8(bytes).unwrap_or_else(|e| e.into_bytes().iter().map(|&b| b as char).collect())
}

fn interleave(a: Vec<Row>, b: Vec<Row>) -> Vec<Row> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut a, mut b) = (a.into_iter(), b.into_iter());
    loop {
        match (a.next(), b.next()) {
            (None, None) => return out,
            (x, y) => out.extend(x.into_iter().chain(y)),
        }
    }
}

fn glue_tsv(path: &Path) -> Result<Vec<Row>, DatasetError> {
    let body = fs::read_to_string(path).map_err(io(path))?;
    let mut lines = body.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split('\t').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse(1, name, "missing header column"))
    };
    let (ti, li) = (col("sentence")?, col("label")?);
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let text = fields.get(ti).ok_or_else(|| parse(row, "sentence", "missing"))?;
        let label = match fields.get(li).map(|l| l.trim()) {
            Some("1") => "positive",
            Some("0") => "negative",
            Some(other) => {
                return Err(DatasetError::UnknownLabel {
                    row,
                    raw: other.to_string(),
                })
            }
            None => return Err(parse(row, "label", "missing")),
        };
        rows.push(Row {
            text: clean(text),
            label,
            topic: None,
        });
    }
    Ok(rows)
}

fn lines_of(path: &Path, label: &'static str) -> Result<Vec<Row>, DatasetError> {
    let body = decode(fs::read(path).map_err(io(path))?);
    Ok(body
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Row {
            text: clean(l),
            label,
            topic: None,
        })
        .collect())
}

fn rt_polarity(dir: &Path) -> Result<Vec<Row>, DatasetError> {
    let pos = lines_of(&dir.join("rt-polarity.pos"), "positive")?;
    let neg = lines_of(&dir.join("rt-polarity.neg"), "negative")?;
    Ok(interleave(pos, neg))
}

fn semeval_label(row: usize, raw: &str) -> Result<&'static str, DatasetError> {
    match raw.trim().to_lowercase().as_str() {
        "positive" | "1" => Ok("positive"),
        "negative" | "-1" => Ok("negative"),
        "neutral" | "0" | "objective" | "objective-or-neutral" => Ok("neutral"),
        _ => Err(DatasetError::UnknownLabel {
            row,
            raw: raw.to_string(),
        }),
    }
}

fn semeval_tsv(path: &Path) -> Result<Vec<Row>, DatasetError> {
    let body = decode(fs::read(path).map_err(io(path))?);
    let mut rows = Vec::new();
    for (i, line) in body.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (topic, label, text) = match fields.as_slice() {
            [_, label, text] => (None, *label, *text),
            [_, topic, label, text, ..] => (Some(topic.trim().to_string()), *label, *text),
            _ => return Err(parse(row, "*", format!("expected 3 or 4 columns, found {}", fields.len()))),
        };
        if text.trim().is_empty() || text.trim() == "Not Available" {
            continue;
        }
        rows.push(Row {
            text: clean(text),
            label: semeval_label(row, label)?,
            topic,
        });
    }
    Ok(rows)
}

fn polarity_csv(path: &Path) -> Result<Vec<Row>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| parse(0, "*", e.to_string()))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse(row, "*", e.to_string()))?;
        let label = match record.get(0).map(str::trim) {
            Some("1") => "negative",
            Some("2") => "positive",
            Some(other) => {
                return Err(DatasetError::UnknownLabel {
                    row,
                    raw: other.to_string(),
                })
            }
            None => return Err(parse(row, "label", "missing")),
        };
        let text = match record.len() {
            2 => record[1].to_string(),
            n if n >= 3 => format!("{} {}", record[1].trim(), &record[2]),
            _ => return Err(parse(row, "text", "missing")),
        };
        let text = clean(&text.replace("\\n", " "));
        if !text.is_empty() {
            rows.push(Row { text, label, topic: None });
        }
    }
    Ok(rows)
}

fn imdb_dir(dir: &Path, label: &'static str) -> Result<Vec<Row>, DatasetError> {
    let mut files: Vec<(u64, u64, PathBuf)> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .map(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let mut parts = stem.split('_').map(|n| n.parse::<u64>().unwrap_or(u64::MAX));
            (parts.next().unwrap_or(u64::MAX), parts.next().unwrap_or(0), p)
        })
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|(_, _, p)| {
            Ok(Row {
                text: clean(&decode(fs::read(&p).map_err(io(&p))?)),
                label,
                topic: None,
            })
        })
        .collect()
}

fn acl_imdb(dir: &Path) -> Result<Vec<Row>, DatasetError> {
    let split = if dir.join("pos").is_dir() { dir.to_path_buf() } else { dir.join("test") };
    let pos = imdb_dir(&split.join("pos"), "positive")?;
    let neg = imdb_dir(&split.join("neg"), "negative")?;
    Ok(interleave(pos, neg))
}

/// Converts `input` to a normalized file at `output`; returns the row count.
/// Output is JSONL when `output` ends in `.jsonl`, TSV otherwise.
pub fn convert_dataset(format: SourceFormat, input: &Path, output: &Path) -> Result<usize, DatasetError> {
    let rows = match format {
        SourceFormat::GlueTsv => glue_tsv(input)?,
        SourceFormat::RtPolarity => rt_polarity(input)?,
        SourceFormat::SemevalTsv => semeval_tsv(input)?,
        SourceFormat::PolarityCsv => polarity_csv(input)?,
        SourceFormat::AclImdb => acl_imdb(input)?,
    };
    let jsonl = output.extension().is_some_and(|e| e == "jsonl");
    let mut out = BufWriter::new(File::create(output).map_err(io(output))?);
    for row in &rows {
        let line = if jsonl {
            let mut obj = serde_json::json!({"text": row.text, "label": row.label});
            if let Some(topic) = &row.topic {
                obj["topic"] = topic.clone().into();
            }
            obj.to_string()
        } else {
            format!("{}\t{}", row.text, row.label)
        };
        writeln!(out, "{line}").map_err(io(output))?;
    }
    out.flush().map_err(io(output))?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::dataset::{load_dataset, DatasetSpec, LoadOptions};

    #[test]
    fn glue_to_tsv_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("dev.tsv");
        fs::write(&src, "sentence\tlabel\nit 's a charming journey . \t1\nflat\t0\n").unwrap();
        let out = dir.path().join("sst2.tsv");
        assert_eq!(convert_dataset(SourceFormat::GlueTsv, &src, &out).unwrap(), 2);
        let ex = load_dataset(&DatasetSpec::new(DatasetName::Sst2, &out), LoadOptions::default()).unwrap();
        assert_eq!(ex[0].text, "it 's a charming journey .");
        assert_eq!(ex[1].gold.as_ref().unwrap().as_str(), "negative");
    }

    #[test]
    fn rt_polarity_interleaves_and_reads_latin1() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("rt-polarity.pos"), b"caf\xe9 charm\nbright\n").unwrap();
        fs::write(dir.path().join("rt-polarity.neg"), b"drab\n").unwrap();
        let out = dir.path().join("mr.tsv");
        convert_dataset(SourceFormat::RtPolarity, dir.path(), &out).unwrap();
        let body = fs::read_to_string(&out).unwrap();
        assert_eq!(body, "café charm\tpositive\ndrab\tnegative\nbright\tpositive\n");
    }

    #[test]
    fn semeval_topic_goes_to_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("tweets.tsv");
        fs::write(&src, "1\tdunkirk\tpositive\tloved it\n2\tneutral\tjust a tweet\n").unwrap();
        let out = dir.path().join("twitter.jsonl");
        convert_dataset(SourceFormat::SemevalTsv, &src, &out).unwrap();
        let ex = load_dataset(&DatasetSpec::new(DatasetName::Twitter, &out), LoadOptions::default()).unwrap();
        assert_eq!(ex[0].topic.as_deref(), Some("dunkirk"));
        assert_eq!(ex[1].topic, None);
        assert_eq!(ex[1].gold.as_ref().unwrap().as_str(), "neutral");
    }

    #[test]
    fn polarity_csv_codes() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("test.csv");
        fs::write(&src, "\"2\",\"Great\",\"Works well.\"\n\"1\",\"Broke\\nafter a day\"\n").unwrap();
        let out = dir.path().join("amazon2.tsv");
        convert_dataset(SourceFormat::PolarityCsv, &src, &out).unwrap();
        assert_eq!(
            fs::read_to_string(&out).unwrap(),
            "Great Works well.\tpositive\nBroke after a day\tnegative\n"
        );
    }

    #[test]
    fn acl_imdb_layout() {
        let dir = tempfile::tempdir().unwrap();
        let test = dir.path().join("test");
        fs::create_dir_all(test.join("pos")).unwrap();
        fs::create_dir_all(test.join("neg")).unwrap();
        fs::write(test.join("pos/10_9.txt"), "second<br />pos").unwrap();
        fs::write(test.join("pos/2_8.txt"), "first pos").unwrap();
        fs::write(test.join("neg/0_1.txt"), "bad").unwrap();
        let out = dir.path().join("imdb.tsv");
        assert_eq!(convert_dataset(SourceFormat::AclImdb, dir.path(), &out).unwrap(), 3);
        assert_eq!(
            fs::read_to_string(&out).unwrap(),
            "first pos\tpositive\nbad\tnegative\nsecond pos\tpositive\n"
        );
    }
}
