//! Datasets, pipeline modes, accuracy, consensus statistics and reports.

mod ablation;
mod convert;
mod dataset;
mod report;
mod run;
mod session;
mod stats;

use std::path::PathBuf;

use thiserror::Error;

use crate::negotiation::NegotiationError;

pub use ablation::{ablate_consensus, ablate_reasoning, ablate_roles, Ablation};
pub use convert::{convert_dataset, SourceFormat};
pub use dataset::{load_dataset, DatasetError, DatasetFormat, DatasetName, DatasetSpec, LoadOptions};
pub use report::{
    emit_report, format_accuracy, AccuracyStats, ConsensusColumn, EvalReport, ModeResult, ReasoningRow, RoleRow,
    REPORT_SCHEMA_VERSION,
};
pub use run::{evaluate, read_records, EvalOptions, EvalRun, RecordWriter};
pub use session::{run_session, ErrorRecord, ModeKind, PipelineMode, SessionPlan, SessionRecord};
pub use stats::{consensus_stats, percent, ConsensusHistogram};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Mode(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Negotiation(#[from] NegotiationError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("worker pool: {0}")]
    Pool(String),
}
