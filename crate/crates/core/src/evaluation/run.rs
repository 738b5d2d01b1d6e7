use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rayon::prelude::*;

use super::report::{AccuracyStats, ConsensusColumn, ModeResult};
use super::session::{run_session, SessionPlan, SessionRecord};
use super::stats::ConsensusHistogram;
use super::EvalError;
use crate::domain::{Example, NegotiationOutcome};
use crate::negotiation::Negotiator;

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Sessions in flight at once.
    pub concurrency: usize,
    /// Set to stop scheduling new sessions; finished ones are kept.
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            concurrency: 1,
            cancel: None,
        }
    }
}

impl EvalOptions {
    fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst))
    }
}

/// Everything one plan produced over one dataset.
#[derive(Debug, Clone)]
pub struct EvalRun {
    pub dataset: String,
    pub plan: SessionPlan,
    /// In input order; shorter than the input list if cancelled.
    pub records: Vec<SessionRecord>,
    pub cancelled: bool,
}

impl EvalRun {
    pub fn stats(&self) -> AccuracyStats {
        AccuracyStats::from_records(&self.records)
    }

    pub fn result(&self) -> ModeResult {
        let stats = self.stats();
        ModeResult {
            dataset: self.dataset.clone(),
            mode: self.plan.name().to_string(),
            agents: self.plan.agents(),
            stats,
            accuracy: stats.accuracy(),
        }
    }

    /// Consensus histograms of the negotiations run in each role order
    /// (arbitration negotiations excluded).
    pub fn consensus(&self) -> Vec<ConsensusColumn> {
        let mut columns: Vec<ConsensusColumn> = Vec::new();
        let mut add = |gen: &str, disc: &str, outcome: &NegotiationOutcome| {
            let setup = format!("G{gen}-D{disc}");
            let pos = match columns.iter().position(|c| c.setup == setup) {
                Some(p) => p,
                None => {
                    columns.push(ConsensusColumn {
                        dataset: self.dataset.clone(),
                        setup,
                        histogram: ConsensusHistogram::default(),
                    });
                    columns.len() - 1
                }
            };
            columns[pos].histogram.add(outcome);
        };
        if matches!(self.plan, SessionPlan::Vanilla(_)) {
            return columns;
        }
        for record in &self.records {
            for t in record.primary.iter().chain(record.flipped.iter()) {
                add(&t.gen_agent, &t.disc_agent, &t.outcome);
            }
        }
        columns
    }
}

/// Runs `plan` over `examples` on a pool of `options.concurrency` workers,
/// handing each finished record to `sink` in input order.
pub fn evaluate(
    negotiator: &Negotiator,
    dataset: &str,
    plan: &SessionPlan,
    examples: &[Example],
    options: &EvalOptions,
    sink: &mut dyn FnMut(&SessionRecord) -> std::io::Result<()>,
) -> Result<EvalRun, EvalError> {
    for agent in plan.agents() {
        negotiator.agent(&agent)?;
    }
    let workers = options.concurrency.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let mut records = Vec::with_capacity(examples.len());
    let mut cancelled = false;
    for batch in examples.chunks(workers * 4) {
        if options.cancelled() {
            cancelled = true;
            break;
        }
        let done: Vec<Option<SessionRecord>> = pool.install(|| {
            batch
                .par_iter()
                .map(|ex| {
                    if options.cancelled() {
                        return None;
                    }
                    let result = run_session(negotiator, plan, ex);
                    Some(SessionRecord::new(plan, ex, &result))
                })
                .collect()
        });
        for record in done {
            match record {
                Some(r) => {
                    sink(&r).map_err(|source| EvalError::Io {
                        path: "<sink>".into(),
                        source,
                    })?;
                    records.push(r);
                }
                None => cancelled = true,
            }
        }
        if cancelled {
            break;
        }
    }
    Ok(EvalRun {
        dataset: dataset.to_string(),
        plan: plan.clone(),
        records,
        cancelled,
    })
}

/// Appends records to a JSONL file, one per line, flushing after each.
pub struct RecordWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self, EvalError> {
        let file = File::create(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, record: &SessionRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

/// Reads a transcripts file; a bad line is reported by its 1-based number.
pub fn read_records(path: &Path) -> Result<Vec<SessionRecord>, EvalError> {
    let file = File::open(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Record {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
