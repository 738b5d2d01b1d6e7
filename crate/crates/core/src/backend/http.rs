//! OpenAI-compatible chat-completions client.

use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentBackend, BackendError, Completion, CompletionRequest};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "NEGOTIATE_API_KEY";

/// Bounded exponential backoff: `base_delay * 2^(n-1)` before retry `n`,
/// scaled by a uniform factor in `[1 - jitter, 1 + jitter]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    /// Nominal delay (no jitter) after the `failed_attempt`-th failure.
    pub fn nominal_delay(&self, failed_attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(failed_attempt.saturating_sub(1))
    }

    pub fn delay(&self, failed_attempt: u32, rng: &mut impl Rng) -> Duration {
        let nominal = self.nominal_delay(failed_attempt).as_secs_f64();
        let factor = if self.jitter > 0.0 {
            rng.random_range(1.0 - self.jitter..=1.0 + self.jitter)
        } else {
            1.0
        };
        Duration::from_secs_f64((nominal * factor).max(0.0))
    }
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

enum Attempt {
    Done(Result<String, BackendError>),
    Retry(BackendError),
}

pub struct OpenAiBackend {
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl std::fmt::Debug for OpenAiBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiBackend")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("retry", &self.retry)
            .finish()
    }
}

impl OpenAiBackend {
    /// `base_url` is the API root, e.g. `https://api.openai.com/v1`.
    pub fn new(base_url: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build();
        Self {
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key: None,
            retry: RetryPolicy::default(),
            agent: config.into(),
        }
    }

    /// Like [`new`](Self::new), reading the key from [`API_KEY_ENV`] if set.
    pub fn from_env(base_url: &str) -> Self {
        Self::from_env_var(base_url, API_KEY_ENV)
    }

    pub fn from_env_var(base_url: &str, var: &str) -> Self {
        let backend = Self::new(base_url);
        match std::env::var(var) {
            Ok(key) if !key.is_empty() => backend.with_api_key(key),
            _ => backend,
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, req: &CompletionRequest) -> Attempt {
        let body = ChatRequest {
            model: &req.model,
            messages: [ChatMessage {
                role: "user",
                content: &req.prompt,
            }],
            temperature: req.temperature,
            max_tokens: req.max_output_tokens,
        };
        let mut request = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match request.send_json(&body) {
            Ok(response) => response,
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        match status {
            200..=299 => {
                let parsed = response
                    .body_mut()
                    .read_json::<ChatResponse>()
                    .map_err(|e| BackendError::Protocol(format!("unreadable response body: {e}")))
                    .and_then(|r| {
                        r.choices
                            .into_iter()
                            .next()
                            .and_then(|c| c.message.content)
                            .ok_or_else(|| BackendError::Protocol("no choices[0].message.content".into()))
                    });
                Attempt::Done(parsed)
            }
            401 | 403 => {
                let message = response.body_mut().read_to_string().unwrap_or_default();
                Attempt::Done(Err(BackendError::Auth { status, message }))
            }
            429 => Attempt::Retry(BackendError::RateLimited { attempts: 0 }),
            500..=599 => {
                let body = response.body_mut().read_to_string().unwrap_or_default();
                Attempt::Retry(BackendError::Transport(format!("server error {status}: {body}")))
            }
            _ => {
                let body = response.body_mut().read_to_string().unwrap_or_default();
                Attempt::Done(Err(BackendError::Http { status, body }))
            }
        }
    }
}

impl AgentBackend for OpenAiBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        let started = Instant::now();
        let mut rng = rand::rng();
        let attempts = self.retry.max_attempts.max(1);
        let mut last = None;
        for attempt in 1..=attempts {
            match self.attempt(req) {
                Attempt::Done(result) => {
                    return result.map(|text| Completion {
                        text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        cached: false,
                    })
                }
                Attempt::Retry(err) => {
                    last = Some(err);
                    if attempt < attempts {
                        thread::sleep(self.retry.delay(attempt, &mut rng));
                    }
                }
            }
        }
        Err(match last.expect("at least one attempt") {
            BackendError::RateLimited { .. } => BackendError::RateLimited { attempts },
            other => other,
        })
    }
}
