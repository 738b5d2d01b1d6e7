use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{percent, ConsensusHistogram};
use super::{EvalError, SessionRecord};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Counts behind one accuracy figure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub correct: usize,
    /// Denominator: inputs with a gold label that did not fail in transport.
    pub evaluated: usize,
    /// Inputs whose session failed for a non-transport reason (counted wrong).
    pub failed: usize,
    /// Inputs whose session failed in transport (excluded).
    pub transport_errors: usize,
}

impl AccuracyStats {
    pub fn from_records<'a, I>(records: I) -> Self
    where
        I: IntoIterator<Item = &'a SessionRecord>,
    {
        let mut stats = Self::default();
        for r in records {
            match &r.error {
                Some(e) if e.transport => stats.transport_errors += 1,
                Some(_) => stats.failed += 1,
                None => {}
            }
            if r.is_evaluated() {
                stats.evaluated += 1;
                if r.is_correct() {
                    stats.correct += 1;
                }
            }
        }
        stats
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.evaluated > 0).then(|| self.correct as f64 / self.evaluated as f64)
    }
}

/// Accuracy of one pipeline setting on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub dataset: String,
    pub mode: String,
    pub agents: Vec<String>,
    pub stats: AccuracyStats,
    pub accuracy: Option<f64>,
}

impl ModeResult {
    pub fn setting(&self) -> String {
        format!("{} ({})", self.mode, self.agents.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleRow {
    pub dataset: String,
    pub generator: String,
    /// Absent for a lone generator without negotiation.
    pub discriminator: Option<String>,
    pub stats: AccuracyStats,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusColumn {
    pub dataset: String,
    /// Role order, e.g. `Ga-Db`.
    pub setup: String,
    pub histogram: ConsensusHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningRow {
    pub dataset: String,
    pub setup: String,
    pub reasoning: bool,
    pub stats: AccuracyStats,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    /// The effective configuration the results were produced under.
    pub config: serde_json::Value,
    #[serde(default)]
    pub results: Vec<ModeResult>,
    #[serde(default)]
    pub roles: Vec<RoleRow>,
    #[serde(default)]
    pub consensus: Vec<ConsensusColumn>,
    #[serde(default)]
    pub reasoning: Vec<ReasoningRow>,
}

impl EvalReport {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            config,
            results: Vec::new(),
            roles: Vec::new(),
            consensus: Vec::new(),
            reasoning: Vec::new(),
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::from("# Evaluation report\n");
        if !self.results.is_empty() {
            md.push_str("\n## Accuracy\n\n");
            md.push_str(&accuracy_table(&self.results));
        }
        if !self.roles.is_empty() {
            md.push_str("\n## Role assignment\n\n");
            md.push_str(&roles_table(&self.roles));
        }
        if !self.consensus.is_empty() {
            md.push_str("\n## Consensus\n\n");
            md.push_str(&consensus_table(&self.consensus));
        }
        if !self.reasoning.is_empty() {
            md.push_str("\n## Reasoning\n\n");
            md.push_str(&reasoning_table(&self.reasoning));
        }
        md
    }
}

/// Accuracy as a percentage with one decimal, or `-` when nothing was evaluated.
pub fn format_accuracy(accuracy: Option<f64>) -> String {
    accuracy.map_or_else(|| "-".to_string(), |a| format!("{:.1}", a * 100.0))
}

fn push_row(md: &mut String, cells: &[String]) {
    let _ = writeln!(md, "| {} |", cells.join(" | "));
}

fn push_header(md: &mut String, cells: &[String]) {
    push_row(md, cells);
    push_row(md, &vec!["---".to_string(); cells.len()]);
}

fn unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn accuracy_table(results: &[ModeResult]) -> String {
    let datasets = unique(results.iter().map(|r| r.dataset.as_str()));
    let settings: Vec<String> = {
        let all: Vec<String> = results.iter().map(ModeResult::setting).collect();
        unique(all.iter().map(String::as_str)).into_iter().map(str::to_string).collect()
    };
    let mut md = String::new();
    let mut header = vec!["Setting".to_string()];
    header.extend(datasets.iter().map(|d| d.to_string()));
    if datasets.len() > 1 {
        header.push("Avg".into());
    }
    push_header(&mut md, &header);
    for setting in &settings {
        let mut row = vec![setting.clone()];
        let mut present = Vec::new();
        for d in &datasets {
            let acc = results
                .iter()
                .find(|r| &r.setting() == setting && r.dataset == *d)
                .and_then(|r| r.accuracy);
            present.extend(acc);
            row.push(format_accuracy(acc));
        }
        if datasets.len() > 1 {
            let avg = (present.len() == datasets.len()).then(|| present.iter().sum::<f64>() / present.len() as f64);
            row.push(format_accuracy(avg));
        }
        push_row(&mut md, &row);
    }
    md
}

fn roles_table(rows: &[RoleRow]) -> String {
    let mut md = String::new();
    push_header(&mut md, &["Dataset".into(), "G".into(), "D".into(), "ACC".into()]);
    for r in rows {
        push_row(
            &mut md,
            &[
                r.dataset.clone(),
                r.generator.clone(),
                r.discriminator.clone().unwrap_or_else(|| "-".into()),
                format_accuracy(r.accuracy),
            ],
        );
    }
    md
}

fn consensus_table(columns: &[ConsensusColumn]) -> String {
    let mut md = String::new();
    let datasets = unique(columns.iter().map(|c| c.dataset.as_str()));
    for (i, dataset) in datasets.iter().enumerate() {
        if datasets.len() > 1 {
            if i > 0 {
                md.push('\n');
            }
            let _ = writeln!(md, "{dataset}\n");
        }
        let cols: Vec<&ConsensusColumn> = columns.iter().filter(|c| c.dataset == *dataset).collect();
        let mut row_labels: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(String, usize), String> = BTreeMap::new();
        for (j, c) in cols.iter().enumerate() {
            for (label, count) in c.histogram.rows() {
                if !row_labels.contains(&label) {
                    row_labels.push(label.clone());
                }
                cells.insert((label, j), percent(c.histogram.fraction(count)));
            }
        }
        // agree rows by turns, then disagree rows by turns
        row_labels.sort_by_key(|l| {
            let turns: u32 = l.split(' ').next().and_then(|t| t.parse().ok()).unwrap_or(0);
            (l.ends_with("disagree"), turns)
        });
        let mut header = vec![String::new()];
        header.extend(cols.iter().map(|c| c.setup.clone()));
        push_header(&mut md, &header);
        for label in row_labels {
            let mut row = vec![label.clone()];
            for j in 0..cols.len() {
                row.push(cells.get(&(label.clone(), j)).cloned().unwrap_or_else(|| "0%".into()));
            }
            push_row(&mut md, &row);
        }
    }
    md
}

fn reasoning_table(rows: &[ReasoningRow]) -> String {
    let mut md = String::new();
    push_header(&mut md, &["Dataset".into(), "Model".into(), "Reason".into(), "ACC".into()]);
    for r in rows {
        let mut acc = format_accuracy(r.accuracy);
        if !r.reasoning {
            let with = rows
                .iter()
                .find(|w| w.reasoning && w.setup == r.setup && w.dataset == r.dataset)
                .and_then(|w| w.accuracy);
            if let (Some(w), Some(wo)) = (with, r.accuracy) {
                let _ = write!(acc, " ({:+.1})", (wo - w) * 100.0);
            }
        }
        push_row(
            &mut md,
            &[
                r.dataset.clone(),
                r.setup.clone(),
                if r.reasoning { "w" } else { "wo" }.into(),
                acc,
            ],
        );
    }
    md
}

/// Writes `report.json` and `report.md` into an existing directory.
pub fn emit_report(report: &EvalReport, out_dir: &Path) -> Result<(), EvalError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EvalError::Io { path, source }
    };
    if !out_dir.is_dir() {
        return Err(EvalError::Io {
            path: out_dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        });
    }
    let json_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(&json_path, json + "\n").map_err(io(&json_path))?;
    let md_path = out_dir.join("report.md");
    fs::write(&md_path, report.to_markdown()).map_err(io(&md_path))?;
    Ok(())
}
