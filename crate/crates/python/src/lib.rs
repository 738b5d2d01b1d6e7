//! Python bindings: label spaces, response parsing, reconciliation, voting,
//! and a negotiator whose agents are Python callables.

use std::collections::HashMap;
use std::sync::Arc;

use negotiate_core::backend::{
    Agent, AgentBackend, AgentRegistry, BackendError, Completion, CompletionRequest, LexiconBackend,
};
use negotiate_core::domain::{
    LabelSpace as CoreSpace, NegotiationConfig, NegotiationOutcome, SentimentLabel, Example,
};
use negotiate_core::evaluation::{evaluate, run_session, EvalOptions, ModeKind, PipelineMode, SessionRecord};
use negotiate_core::negotiation::{self, Negotiator as CoreNegotiator, Reconciliation};
use negotiate_core::prompting::{self, Prompter, Templates};
use negotiate_core::retrieval::{DemoSource, NoDemos, RetrievedDemos, TfIdfEmbedder, TrainIndex};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// An ordered set of sentiment labels.
#[pyclass(frozen, from_py_object, name = "LabelSpace", module = "negotiate_py")]
#[derive(Clone)]
struct LabelSpace {
    inner: CoreSpace,
}

#[pymethods]
impl LabelSpace {
    #[new]
    fn new(labels: Vec<String>) -> PyResult<Self> {
        Ok(Self {
            inner: CoreSpace::new(labels).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn binary() -> Self {
        Self { inner: CoreSpace::binary() }
    }

    #[staticmethod]
    fn ternary() -> Self {
        Self { inner: CoreSpace::ternary() }
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().iter().map(|l| l.to_string()).collect()
    }

    /// The single label of this space named in `text`.
    fn canonicalize(&self, text: &str) -> PyResult<String> {
        self.inner.canonicalize(text).map(|l| l.to_string()).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("LabelSpace({:?})", self.labels())
    }
}

fn label(space: &CoreSpace, text: &str) -> PyResult<SentimentLabel> {
    space.canonicalize(text).map_err(value_err)
}

/// `(label or None, turns_used)` to an outcome.
fn outcome(space: &CoreSpace, (decision, turns): (Option<String>, u32)) -> PyResult<NegotiationOutcome> {
    Ok(match decision {
        Some(d) => NegotiationOutcome::consensus(label(space, &d)?, turns),
        None => NegotiationOutcome::no_consensus(turns),
    })
}

/// Returns `(decision, reasoning_steps)`.
#[pyfunction]
fn parse_generator(raw: &str, space: &LabelSpace) -> PyResult<(String, Vec<String>)> {
    let r = prompting::parse_generator_response(raw, &space.inner).map_err(value_err)?;
    Ok((r.decision.to_string(), r.reasoning))
}

/// Returns `(attitude, explanation, decision)`; attitude is "yes" or "no".
#[pyfunction]
fn parse_discriminator(raw: &str, space: &LabelSpace, gen_decision: &str) -> PyResult<(String, String, String)> {
    let gen = label(&space.inner, gen_decision)?;
    let r = prompting::parse_discriminator_response(raw, &space.inner, &gen).map_err(value_err)?;
    Ok((r.attitude.as_str().to_string(), r.explanation, r.decision.to_string()))
}

/// Compares two role-flipped outcomes, each `(label or None, turns_used)`.
/// Returns `("final", label)`, `("escalate", None)` or `("unresolved", None)`.
#[pyfunction]
fn reconcile(
    space: &LabelSpace,
    ab: (Option<String>, u32),
    ba: (Option<String>, u32),
) -> PyResult<(&'static str, Option<String>)> {
    let (ab, ba) = (outcome(&space.inner, ab)?, outcome(&space.inner, ba)?);
    Ok(match negotiation::reconcile(&ab, &ba) {
        Reconciliation::Final(l) => ("final", Some(l.to_string())),
        Reconciliation::Escalate => ("escalate", None),
        Reconciliation::Unresolved => ("unresolved", None),
    })
}

/// Plurality vote over six outcomes. Returns `(label, counts, fallback_used)`.
#[pyfunction]
fn majority_vote(
    space: &LabelSpace,
    outcomes: Vec<(Option<String>, u32)>,
    fallback: &str,
) -> PyResult<(String, HashMap<String, usize>, bool)> {
    let outcomes: Vec<NegotiationOutcome> = outcomes
        .into_iter()
        .map(|o| outcome(&space.inner, o))
        .collect::<PyResult<_>>()?;
    let outcomes: [NegotiationOutcome; 6] = outcomes
        .try_into()
        .map_err(|v: Vec<_>| PyValueError::new_err(format!("expected 6 outcomes, got {}", v.len())))?;
    let fallback = label(&space.inner, fallback)?;
    let vote = negotiation::majority_vote(&outcomes, &space.inner, &fallback);
    let counts = vote.tally.counts.iter().map(|(l, c)| (l.to_string(), *c)).collect();
    Ok((vote.label.to_string(), counts, vote.fallback_used))
}

/// Calls a Python function `f(prompt) -> str`.
struct CallableBackend {
    func: Py<PyAny>,
}

impl AgentBackend for CallableBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        Python::attach(|py| {
            let text = self
                .func
                .call1(py, (req.prompt.as_str(),))
                .and_then(|r| r.extract::<String>(py))
                .map_err(|e| BackendError::Transport(format!("agent {}: {e}", req.agent_id)))?;
            Ok(Completion {
                text,
                latency_ms: 0,
                cached: false,
            })
        })
    }
}

fn to_python(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Runs negotiation pipelines over Python-backed agents.
///
/// `agents` maps ids to callables taking a prompt and returning the reply,
/// or to the string "lexicon" for the built-in offline agent. With `train`
/// (a list of `(text, label)`) and `k > 0`, demonstrations are retrieved
/// from it per input; otherwise prompts are zero-shot.
#[pyclass(frozen, name = "Negotiator", module = "negotiate_py")]
struct Negotiator {
    inner: CoreNegotiator,
    space: CoreSpace,
}

fn build_registry(agents: &Bound<'_, PyDict>) -> PyResult<AgentRegistry> {
    let mut registry = AgentRegistry::new();
    for (id, value) in agents.iter() {
        let id: String = id.extract()?;
        let backend: Arc<dyn AgentBackend> = match value.extract::<String>() {
            Ok(s) if s == "lexicon" => Arc::new(LexiconBackend::new()),
            Ok(s) => return Err(PyValueError::new_err(format!("agent {id:?}: unknown built-in {s:?}"))),
            Err(_) if value.is_callable() => Arc::new(CallableBackend { func: value.unbind() }),
            Err(_) => return Err(PyValueError::new_err(format!("agent {id:?} is not callable"))),
        };
        registry.insert(Agent::new(&id, &id, backend));
    }
    Ok(registry)
}

fn examples(space: &CoreSpace, prefix: &str, rows: Vec<(String, Option<String>)>) -> PyResult<Vec<Example>> {
    rows.into_iter()
        .enumerate()
        .map(|(i, (text, gold))| {
            let mut e = Example::new(format!("{prefix}:{}", i + 1), text).map_err(value_err)?;
            if let Some(g) = gold {
                e = e.with_gold(label(space, &g)?);
            }
            Ok(e)
        })
        .collect()
}

fn plan(mode: &str, agents: Vec<String>) -> PyResult<negotiate_core::evaluation::SessionPlan> {
    let kind: ModeKind = mode.parse().map_err(value_err)?;
    Ok(PipelineMode::new(kind, agents).map_err(value_err)?.plan())
}

#[pymethods]
impl Negotiator {
    #[new]
    #[pyo3(signature = (agents, space=None, max_turns=3, reasoning=true, k=5, train=None, embed_dim=4096))]
    fn new(
        agents: &Bound<'_, PyDict>,
        space: Option<LabelSpace>,
        max_turns: u32,
        reasoning: bool,
        k: usize,
        train: Option<Vec<(String, String)>>,
        embed_dim: usize,
    ) -> PyResult<Self> {
        let space = space.map_or_else(CoreSpace::binary, |s| s.inner);
        let config = NegotiationConfig {
            max_turns,
            k_demos: k,
            reasoning_enabled: reasoning,
            ..NegotiationConfig::default()
        };
        config.validate().map_err(value_err)?;
        let demos: Arc<dyn DemoSource> = match train {
            Some(rows) if k > 0 && !rows.is_empty() => {
                let rows = rows.into_iter().map(|(t, l)| (t, Some(l))).collect();
                let train = examples(&space, "train", rows)?;
                let embedder = TfIdfEmbedder::fit(train.iter().map(|e| e.text.as_str()), embed_dim);
                let index = TrainIndex::build(train, &embedder).map_err(value_err)?;
                Arc::new(RetrievedDemos::new(index, Arc::new(embedder)).map_err(value_err)?)
            }
            _ => Arc::new(NoDemos),
        };
        let prompter = Prompter::new(space.clone(), config, Templates::default());
        let inner = CoreNegotiator::new(build_registry(agents)?, prompter, demos).map_err(value_err)?;
        Ok(Self { inner, space })
    }

    /// Runs one input through `mode` ("vanilla_icl", "self_negotiation",
    /// "dual_negotiation" or "dual_with_arbitration") and returns the
    /// session record as a dict.
    #[pyo3(signature = (mode, agents, text, gold=None))]
    fn session(
        &self,
        py: Python<'_>,
        mode: &str,
        agents: Vec<String>,
        text: String,
        gold: Option<String>,
    ) -> PyResult<Py<PyAny>> {
        let plan = plan(mode, agents)?;
        let input = examples(&self.space, "input", vec![(text, gold)])?.remove(0);
        let result = py.detach(|| run_session(&self.inner, &plan, &input));
        to_python(py, &SessionRecord::new(&plan, &input, &result))
    }

    /// Evaluates `mode` over `(text, gold)` pairs. Returns a dict with
    /// accuracy, counts and one record per input.
    #[pyo3(signature = (mode, agents, rows, concurrency=1, dataset="py"))]
    fn evaluate(
        &self,
        py: Python<'_>,
        mode: &str,
        agents: Vec<String>,
        rows: Vec<(String, String)>,
        concurrency: usize,
        dataset: &str,
    ) -> PyResult<Py<PyAny>> {
        let plan = plan(mode, agents)?;
        let rows = rows.into_iter().map(|(t, g)| (t, Some(g))).collect();
        let inputs = examples(&self.space, dataset, rows)?;
        let options = EvalOptions {
            concurrency,
            cancel: None,
        };
        let run = py
            .detach(|| evaluate(&self.inner, dataset, &plan, &inputs, &options, &mut |_| Ok(())))
            .map_err(runtime_err)?;
        let stats = run.stats();
        let out = serde_json::json!({
            "accuracy": stats.accuracy(),
            "correct": stats.correct,
            "evaluated": stats.evaluated,
            "failed": stats.failed,
            "transport_errors": stats.transport_errors,
            "records": run.records,
        });
        to_python(py, &out)
    }
}

#[pymodule]
fn negotiate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<LabelSpace>()?;
    m.add_class::<Negotiator>()?;
    m.add_function(wrap_pyfunction!(parse_generator, m)?)?;
    m.add_function(wrap_pyfunction!(parse_discriminator, m)?)?;
    m.add_function(wrap_pyfunction!(reconcile, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    Ok(())
}
