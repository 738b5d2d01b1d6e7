use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use negotiate_core::backend::{
    Agent, AgentBackend, AgentRegistry, CachedBackend, LexiconBackend, MockScript, OpenAiBackend, ResponseCache,
    ScriptedBackend, API_KEY_ENV,
};
use negotiate_core::domain::{Example, LabelSpace};
use negotiate_core::evaluation::{
    ablate_consensus, ablate_reasoning, ablate_roles, convert_dataset, emit_report, evaluate, load_dataset,
    DatasetName, EvalOptions, EvalReport, EvalRun, LoadOptions, RecordWriter, SourceFormat,
};
use negotiate_core::negotiation::Negotiator;
use negotiate_core::prompting::{Prompter, Templates};
use negotiate_core::retrieval::{DemoSource, NoDemos, RetrievedDemos, TfIdfEmbedder, TrainIndex};

use crate::config::{AgentConfig, AgentKind, DatasetConfig, RunConfig};
use crate::CliError;

pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationKind {
    Roles,
    Reasoning,
    Consensus,
}

fn build_agent(config: &RunConfig, a: &AgentConfig) -> Result<Agent, CliError> {
    let (model, backend): (String, Arc<dyn AgentBackend>) = match a.kind {
        AgentKind::Openai => {
            let base_url = a.base_url.as_deref().unwrap_or_default();
            let var = a.api_key_env.as_deref().unwrap_or(API_KEY_ENV);
            let http = OpenAiBackend::from_env_var(base_url, var);
            let backend: Arc<dyn AgentBackend> = match &config.cache_dir {
                Some(dir) => Arc::new(CachedBackend::new(http, ResponseCache::open(dir)?)),
                None => Arc::new(http),
            };
            (a.model.clone().unwrap_or_default(), backend)
        }
        AgentKind::Lexicon => (
            a.model.clone().unwrap_or_else(|| "lexicon".into()),
            Arc::new(LexiconBackend::new()),
        ),
        AgentKind::Scripted => {
            let path = a.script.as_deref().unwrap_or(Path::new(""));
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let responses: Vec<String> = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("agent {:?}: script {}: {e}", a.id, path.display())))?;
            (
                a.model.clone().unwrap_or_else(|| "scripted".into()),
                Arc::new(ScriptedBackend::new(MockScript::new().with(&a.id, responses))),
            )
        }
    };
    let mut agent = Agent::new(&a.id, model, backend);
    if let Some(n) = a.max_output_tokens {
        agent = agent.with_max_output_tokens(n);
    }
    Ok(agent)
}

pub fn build_registry(config: &RunConfig) -> Result<AgentRegistry, CliError> {
    let mut registry = AgentRegistry::new();
    for a in &config.agents {
        registry.insert(build_agent(config, a)?);
    }
    Ok(registry)
}

fn fit_index(train: Vec<Example>, dim: usize) -> Result<(TrainIndex, TfIdfEmbedder), CliError> {
    let embedder = TfIdfEmbedder::fit(train.iter().map(|e| e.text.as_str()), dim);
    let index = TrainIndex::build(train, &embedder)?;
    Ok((index, embedder))
}

fn demo_source(config: &RunConfig, dataset: &DatasetConfig) -> Result<Arc<dyn DemoSource>, CliError> {
    let Some(spec) = dataset.train_spec()? else {
        return Ok(Arc::new(NoDemos));
    };
    if config.negotiation.k_demos == 0 {
        return Ok(Arc::new(NoDemos));
    }
    let dim = config.retrieval.embed_dim;
    let (index, embedder) = match &config.retrieval.index_dir {
        Some(root) => {
            let dir = root.join(&dataset.name);
            if dir.join("manifest.json").is_file() {
                (TrainIndex::load(&dir)?, TfIdfEmbedder::load(&dir)?)
            } else {
                let (index, embedder) = fit_index(load_dataset(&spec, LoadOptions::default())?, dim)?;
                index.save(&dir)?;
                embedder.save(&dir)?;
                (index, embedder)
            }
        }
        None => fit_index(load_dataset(&spec, LoadOptions::default())?, dim)?,
    };
    Ok(Arc::new(RetrievedDemos::new(index, Arc::new(embedder))?))
}

fn build_negotiator(
    config: &RunConfig,
    registry: &AgentRegistry,
    dataset: &DatasetConfig,
    space: LabelSpace,
) -> Result<Negotiator, CliError> {
    let templates = Templates::load(
        config.templates.generator.as_deref(),
        config.templates.discriminator.as_deref(),
    )
    .map_err(|e| CliError::Config(format!("templates: {e}")))?;
    let prompter = Prompter::new(space, config.negotiation.clone(), templates);
    Negotiator::new(registry.clone(), prompter, demo_source(config, dataset)?)
        .map_err(|e| CliError::Config(e.to_string()))
}

/// One configured dataset, loaded and ready to evaluate.
struct Prepared {
    name: String,
    examples: Vec<Example>,
    negotiator: Negotiator,
}

fn prepare(config: &RunConfig, registry: &AgentRegistry, dataset: &DatasetConfig) -> Result<Prepared, CliError> {
    let spec = dataset.spec()?;
    let options = LoadOptions {
        limit: config.limit,
        shuffle_seed: config.seed,
    };
    let examples = load_dataset(&spec, options)?;
    let negotiator = build_negotiator(config, registry, dataset, spec.label_space.clone())?;
    Ok(Prepared {
        name: dataset.dataset_name()?.as_str().to_string(),
        examples,
        negotiator,
    })
}

fn create_out(config: &RunConfig) -> Result<RecordWriter, CliError> {
    std::fs::create_dir_all(&config.out).map_err(|source| CliError::Io {
        path: config.out.clone(),
        source,
    })?;
    Ok(RecordWriter::create(&config.out.join(TRANSCRIPTS_FILE))?)
}

fn report_for(config: &RunConfig) -> EvalReport {
    EvalReport::new(serde_json::to_value(config).unwrap_or_default())
}

fn write_all(writer: &mut RecordWriter, runs: &[EvalRun]) -> Result<(), CliError> {
    for record in runs.iter().flat_map(|r| &r.records) {
        writer.write(record).map_err(|source| CliError::Io {
            path: writer.path().to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

fn finish(config: &RunConfig, report: &EvalReport, cancelled: bool) -> Result<(), CliError> {
    emit_report(report, &config.out)?;
    print!("{}", report.to_markdown());
    eprintln!("wrote {}", config.out.display());
    if cancelled {
        return Err(CliError::Interrupted);
    }
    Ok(())
}

pub fn run(config: &RunConfig, cancel: Arc<AtomicBool>) -> Result<(), CliError> {
    config.validate()?;
    let plan = config.mode()?.plan();
    let registry = build_registry(config)?;
    let mut writer = create_out(config)?;
    let options = EvalOptions {
        concurrency: config.concurrency,
        cancel: Some(cancel),
    };
    let mut report = report_for(config);
    let mut cancelled = false;
    for dataset in &config.datasets {
        let p = prepare(config, &registry, dataset)?;
        let path = writer.path().to_path_buf();
        let run = evaluate(&p.negotiator, &p.name, &plan, &p.examples, &options, &mut |r| writer.write(r))
            .map_err(|e| match e {
                negotiate_core::evaluation::EvalError::Io { source, .. } => CliError::Io { path, source },
                other => other.into(),
            })?;
        let stats = run.stats();
        eprintln!(
            "{}: {} correct of {} evaluated ({} failed, {} transport errors)",
            p.name, stats.correct, stats.evaluated, stats.failed, stats.transport_errors
        );
        report.results.push(run.result());
        report.consensus.extend(run.consensus());
        if run.cancelled {
            cancelled = true;
            break;
        }
    }
    finish(config, &report, cancelled)
}

fn pair(config: &RunConfig) -> Result<(String, String), CliError> {
    match config.mode.agents.as_slice() {
        [a, b, ..] => Ok((a.clone(), b.clone())),
        _ => Err(CliError::Config(
            "this ablation needs a mode with at least two agents".into(),
        )),
    }
}

pub fn ablate(config: &RunConfig, kind: AblationKind, cancel: Arc<AtomicBool>) -> Result<(), CliError> {
    config.validate()?;
    let plan = config.mode()?.plan();
    let registry = build_registry(config)?;
    let mut writer = create_out(config)?;
    let options = EvalOptions {
        concurrency: config.concurrency,
        cancel: Some(cancel),
    };
    let mut report = report_for(config);
    let mut cancelled = false;
    for dataset in &config.datasets {
        let p = prepare(config, &registry, dataset)?;
        let (n, ex) = (&p.negotiator, p.examples.as_slice());
        let runs = match kind {
            AblationKind::Roles => {
                let (a, b) = pair(config)?;
                let ab = ablate_roles(n, &a, &b, &p.name, ex, &options)?;
                report.roles.extend(ab.rows);
                ab.runs
            }
            AblationKind::Reasoning => {
                let ab = ablate_reasoning(n, &plan, &p.name, ex, &options)?;
                report.reasoning.extend(ab.rows);
                ab.runs
            }
            AblationKind::Consensus => {
                let (a, b) = pair(config)?;
                let ab = ablate_consensus(n, &a, &b, &p.name, ex, &options)?;
                report.consensus.extend(ab.rows);
                ab.runs
            }
        };
        write_all(&mut writer, &runs)?;
        if runs.iter().any(|r| r.cancelled) {
            cancelled = true;
            break;
        }
    }
    finish(config, &report, cancelled)
}

pub fn convert(name: &str, format: Option<&str>, input: &Path, output: &PathBuf) -> Result<(), CliError> {
    let name: DatasetName = name.parse().map_err(|e| CliError::Config(format!("{e}")))?;
    let format = match format {
        Some(f) => f.parse().map_err(|e| CliError::Config(format!("{e}")))?,
        None => SourceFormat::default_for(name),
    };
    let n = convert_dataset(format, input, output)?;
    eprintln!("wrote {n} examples to {}", output.display());
    Ok(())
}
