//! `negotiate`: run, inspect and ablate negotiation-based sentiment evaluations.

mod commands;
mod config;
mod inspect;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use negotiate_core::backend::BackendError;
use negotiate_core::evaluation::{DatasetError, EvalError};
use negotiate_core::retrieval::RetrievalError;
use thiserror::Error;

use crate::commands::AblationKind;
use crate::config::{Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    NotFound(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stopped before all inputs were evaluated; finished sessions were kept")]
    Interrupted,
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Dataset(d) => CliError::Dataset(d),
            EvalError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Eval(other),
        }
    }
}

impl CliError {
    /// Leading word of the stderr message, for scripts.
    pub fn prefix(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::NotFound(_) => "not-found",
            CliError::Dataset(_) => "dataset",
            CliError::Retrieval(_) => "retrieval",
            CliError::Backend(_) => "backend",
            CliError::Eval(EvalError::Record { .. }) => "transcripts",
            CliError::Eval(_) => "runtime",
            CliError::Io { .. } => "io",
            CliError::Interrupted => "interrupted",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "negotiate", version, about = "Generator/discriminator negotiation for sentiment classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Run configuration file
    #[arg(long, global = true, default_value = "negotiate.toml")]
    config: PathBuf,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Evaluate only the first N inputs of each dataset
    #[arg(long, global = true)]
    limit: Option<usize>,
    /// Shuffle inputs with this seed before applying --limit
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sessions in flight at once
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Drop rationales from prompts, demonstrations and answers
    #[arg(long, global = true)]
    no_reasoning: bool,
    #[arg(long, global = true)]
    max_turns: Option<u32>,
    /// Demonstrations retrieved per input
    #[arg(long, global = true)]
    k: Option<usize>,
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            limit: self.limit,
            seed: self.seed,
            concurrency: self.concurrency,
            no_reasoning: self.no_reasoning,
            max_turns: self.max_turns,
            k: self.k,
        }
    }

    fn load(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::load(&self.config)?;
        config.apply(&self.overrides());
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the configured mode on every configured dataset
    Run,
    /// Print one input's negotiations from a transcripts file
    Inspect { transcripts: PathBuf, id: String },
    /// Role, reasoning or consensus ablation over the configured agents
    Ablate {
        #[arg(value_enum)]
        kind: AblationKind,
    },
    /// Turn a benchmark's original download into the normalized layout
    ConvertDataset {
        /// sst2, mr, twitter, yelp2, amazon2 or imdb
        name: String,
        input: PathBuf,
        /// .jsonl for JSON lines, anything else for text<TAB>label
        output: PathBuf,
        /// glue-tsv, rt-polarity, semeval-tsv, polarity-csv or aclimdb
        #[arg(long)]
        format: Option<String>,
    },
}

fn cancel_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let handler = flag.clone();
    // a second Ctrl-C exits immediately
    let _ = ctrlc::set_handler(move || {
        if handler.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
        eprintln!("interrupt: finishing sessions in flight");
    });
    flag
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run => commands::run(&cli.global.load()?, cancel_flag()),
        Command::Ablate { kind } => commands::ablate(&cli.global.load()?, *kind, cancel_flag()),
        Command::Inspect { transcripts, id } => inspect::inspect(transcripts, id),
        Command::ConvertDataset {
            name,
            input,
            output,
            format,
        } => commands::convert(name, format.as_deref(), input, output),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.prefix());
            ExitCode::from(e.exit_code())
        }
    }
}
