//! Deterministic backends for tests, fixtures and offline runs.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{AgentBackend, BackendError, Completion, CompletionRequest};

/// Per-agent queues of canned responses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockScript {
    pub responses: BTreeMap<String, Vec<String>>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, agent_id: impl Into<String>, response: impl Into<String>) -> &mut Self {
        self.responses
            .entry(agent_id.into())
            .or_default()
            .push(response.into());
        self
    }

    pub fn with<I, S>(mut self, agent_id: &str, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queue = self.responses.entry(agent_id.to_string()).or_default();
        queue.extend(responses.into_iter().map(Into::into));
        self
    }
}

/// Replays a [`MockScript`]: each call pops the next response queued for the
/// request's `agent_id`. Running out is an error, never a default answer.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queues: Mutex<BTreeMap<String, VecDeque<String>>>,
    calls: Mutex<Vec<CompletionRequest>>,
}

impl ScriptedBackend {
    pub fn new(script: MockScript) -> Self {
        let queues = script
            .responses
            .into_iter()
            .map(|(agent, responses)| (agent, responses.into()))
            .collect();
        Self {
            queues: Mutex::new(queues),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Every request seen so far, in call order.
    pub fn calls(&self) -> Vec<CompletionRequest> {
        self.calls.lock().expect("calls lock").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("calls lock").len()
    }

    pub fn remaining(&self, agent_id: &str) -> usize {
        self.queues
            .lock()
            .expect("queue lock")
            .get(agent_id)
            .map_or(0, VecDeque::len)
    }
}

impl AgentBackend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        // one lock for pop + log keeps the call log in queue order
        let mut queues = self.queues.lock().expect("queue lock");
        self.calls.lock().expect("calls lock").push(req.clone());
        let text = queues
            .get_mut(&req.agent_id)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| BackendError::ScriptExhausted {
                agent_id: req.agent_id.clone(),
            })?;
        Ok(Completion {
            text,
            latency_ms: 0,
            cached: false,
        })
    }
}

/// Backend driven by a closure over the request.
pub struct FnBackend<F> {
    respond: F,
    calls: Mutex<usize>,
}

impl<F> FnBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        Self {
            respond,
            calls: Mutex::new(0),
        }
    }

    pub fn call_count(&self) -> usize {
        *self.calls.lock().expect("calls lock")
    }
}

impl<F> AgentBackend for FnBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        *self.calls.lock().expect("calls lock") += 1;
        let text = (self.respond)(req)?;
        Ok(Completion {
            text,
            latency_ms: 0,
            cached: false,
        })
    }
}

const POSITIVE_WORDS: &[&str] = &[
    "good", "great", "excellent", "love", "loved", "wonderful", "best", "enjoy", "enjoyed",
    "amazing", "fun", "beautiful", "brilliant", "delightful", "charming", "perfect", "happy",
    "fantastic", "moving", "recommend", "superb", "warm", "funny", "masterpiece", "nice",
];

const NEGATIVE_WORDS: &[&str] = &[
    "bad", "worst", "awful", "terrible", "boring", "hate", "hated", "poor", "dull", "waste",
    "disappointing", "disappointed", "mess", "stupid", "ugly", "horrible", "fails", "failed",
    "annoying", "lame", "tedious", "bland", "rude", "broken", "never",
];

/// An offline stand-in for a model: classifies the test input by counting
/// words from a small sentiment lexicon and answers in the response grammar.
///
/// It recognizes the prompts produced by the default templates (generator,
/// discriminator, and both demo-augmentation prompts). As a generator it
/// never changes its mind; as a discriminator it agrees iff the generator's
/// decision matches its own reading.
#[derive(Debug, Default)]
pub struct LexiconBackend {
    /// Label returned when the lexicon score is zero and no neutral label is offered.
    pub tie_label: Option<String>,
    calls: AtomicUsize,
}

impl LexiconBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn classify(&self, text: &str, labels: &[String]) -> String {
        let mut score = 0i32;
        for word in text
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric() && c != '\'')
            .filter(|w| !w.is_empty())
        {
            if POSITIVE_WORDS.contains(&word) {
                score += 1;
            } else if NEGATIVE_WORDS.contains(&word) {
                score -= 1;
            }
        }
        match score {
            s if s > 0 => "positive".into(),
            s if s < 0 => "negative".into(),
            _ if labels.iter().any(|l| l == "neutral") => "neutral".into(),
            _ => self.tie_label.clone().unwrap_or_else(|| "positive".into()),
        }
    }
}

fn block_after<'a>(prompt: &'a str, header: &str) -> Option<&'a str> {
    let start = prompt.find(header)? + header.len();
    let rest = &prompt[start..];
    Some(rest.split("\n\n").next().unwrap_or(rest).trim())
}

fn offered_labels(prompt: &str) -> Vec<String> {
    block_after(prompt, "Choose one of:")
        .and_then(|b| b.lines().next())
        .map(|line| {
            line.trim_end_matches('.')
                .split(',')
                .map(|l| l.trim().to_string())
                .collect()
        })
        .unwrap_or_else(|| vec!["positive".into(), "negative".into()])
}

impl AgentBackend for LexiconBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let prompt = req.prompt.as_str();
        let labels = offered_labels(prompt);
        let text = if prompt.contains("Explain step by step why") {
            let input = block_after(prompt, "Input:")
                .and_then(|b| b.lines().next())
                .unwrap_or_default();
            format!(
                "Step 1: Read the input: {input}\nStep 2: Its wording carries the stated sentiment."
            )
        } else if prompt.contains("Explain briefly why this decision is correct") {
            "The decision is consistent with the wording of the input.".to_string()
        } else {
            let input = block_after(prompt, "Test input:").unwrap_or(prompt);
            let belief = self.classify(input, &labels);
            match block_after(prompt, "Response from the generator:") {
                Some(gen) => {
                    let agrees = gen
                        .to_lowercase()
                        .contains(&format!("contains {belief} sentiment"));
                    if agrees {
                        "Yes. The decision matches the wording of the input.".to_string()
                    } else {
                        format!(
                            "No. The wording of the input points the other way. The input contains {belief} sentiment."
                        )
                    }
                }
                None if prompt.contains("Rationale:") => format!(
                    "The input contains {belief} sentiment.\nRationale:\nStep 1: Count the sentiment-bearing words in the input.\nStep 2: They indicate {belief} sentiment."
                ),
                None => format!("The input contains {belief} sentiment."),
            }
        };
        Ok(Completion {
            text,
            latency_ms: 0,
            cached: false,
        })
    }
}
