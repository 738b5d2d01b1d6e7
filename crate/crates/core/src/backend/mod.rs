//! Text-completion backends.
//!
//! [`AgentBackend`] is the only capability the protocol needs from a model:
//! prompt in, text out. Implementations: an OpenAI-compatible HTTP client,
//! deterministic test doubles, and a disk cache that wraps any of them.

mod cache;
mod http;
mod mock;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, cached_complete, CacheMetadata, CachedBackend, ResponseCache};
pub use http::{OpenAiBackend, RetryPolicy, API_KEY_ENV};
pub use mock::{FnBackend, LexiconBackend, MockScript, ScriptedBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub agent_id: String,
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.is_empty() {
            return Err(BackendError::InvalidRequest("prompt is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} is not a non-negative number",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// Verbatim model output. `text` is never trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
    pub cached: bool,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("auth: endpoint answered {status}: {message}")]
    Auth { status: u16, message: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("http {status}: {body}")]
    Http { status: u16, body: String },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("mock script for agent {agent_id:?} is exhausted")]
    ScriptExhausted { agent_id: String },
    #[error("cache entry {key} is corrupt: {reason}")]
    CacheCorrupt { key: String, reason: String },
    #[error("cache io: {0}")]
    CacheIo(#[from] std::io::Error),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Failures of the channel rather than of the model's answer. Sessions
    /// that end in one of these are excluded from accuracy.
    pub fn is_transport(&self) -> bool {
        !matches!(self, BackendError::InvalidRequest(_))
    }
}

/// A text-completion capability. Implementations must be usable from many
/// negotiation sessions at once.
pub trait AgentBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError>;
}

impl<T: AgentBackend + ?Sized> AgentBackend for Arc<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(req)
    }
}

impl<T: AgentBackend + ?Sized> AgentBackend for Box<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(req)
    }
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 512;

/// A named participant: an id, the model it asks for, and its backend.
#[derive(Clone)]
pub struct Agent {
    pub id: String,
    pub model: String,
    pub max_output_tokens: u32,
    pub backend: Arc<dyn AgentBackend>,
}

impl fmt::Debug for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Agent")
            .field("id", &self.id)
            .field("model", &self.model)
            .field("max_output_tokens", &self.max_output_tokens)
            .finish_non_exhaustive()
    }
}

impl Agent {
    pub fn new(id: impl Into<String>, model: impl Into<String>, backend: Arc<dyn AgentBackend>) -> Self {
        Self {
            id: id.into(),
            model: model.into(),
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            backend,
        }
    }

    pub fn with_max_output_tokens(mut self, max_output_tokens: u32) -> Self {
        self.max_output_tokens = max_output_tokens;
        self
    }

    pub fn request(&self, prompt: impl Into<String>, temperature: f64) -> CompletionRequest {
        CompletionRequest {
            agent_id: self.id.clone(),
            model: self.model.clone(),
            prompt: prompt.into(),
            temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }

    pub fn ask(&self, prompt: impl Into<String>, temperature: f64) -> Result<Completion, BackendError> {
        let req = self.request(prompt, temperature);
        req.validate()?;
        self.backend.complete(&req)
    }
}

/// Agents by id.
#[derive(Debug, Clone, Default)]
pub struct AgentRegistry {
    agents: BTreeMap<String, Agent>,
}

impl AgentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, agent: Agent) -> Option<Agent> {
        self.agents.insert(agent.id.clone(), agent)
    }

    pub fn with(mut self, agent: Agent) -> Self {
        self.insert(agent);
        self
    }

    pub fn get(&self, id: &str) -> Option<&Agent> {
        self.agents.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.agents.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.agents.keys().map(String::as_str)
    }
}
