//! Content-addressed completion cache.
//!
//! One file per key. Line 1 is a JSON metadata object, everything after the
//! first newline is the verbatim completion text.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AgentBackend, BackendError, Completion, CompletionRequest};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMetadata {
    pub version: u32,
    pub key: String,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub text_bytes: usize,
    pub text_sha256: String,
}

/// Hex SHA-256 over `(model, prompt, temperature, max_output_tokens)`.
pub fn cache_key(req: &CompletionRequest) -> String {
    let material = serde_json::to_vec(&(
        &req.model,
        &req.prompt,
        req.temperature,
        req.max_output_tokens,
    ))
    .expect("tuple of plain values serializes");
    hex::encode(Sha256::digest(material))
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.entry"))
    }

    /// Reads and verifies an entry. A corrupt entry is deleted before the
    /// error is returned, so the next lookup is a clean miss.
    pub fn get(&self, key: &str) -> Result<Option<String>, BackendError> {
        let path = self.entry_path(key);
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        match decode_entry(key, &bytes) {
            Ok(text) => Ok(Some(text)),
            Err(reason) => {
                let _ = fs::remove_file(&path);
                Err(BackendError::CacheCorrupt {
                    key: key.to_string(),
                    reason,
                })
            }
        }
    }

    /// Writes an entry atomically (temp file in the same directory, then rename).
    pub fn put(&self, req: &CompletionRequest, text: &str) -> Result<String, BackendError> {
        let key = cache_key(req);
        let meta = CacheMetadata {
            version: FORMAT_VERSION,
            key: key.clone(),
            model: req.model.clone(),
            temperature: req.temperature,
            max_output_tokens: req.max_output_tokens,
            text_bytes: text.len(),
            text_sha256: hex::encode(Sha256::digest(text.as_bytes())),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer(&mut tmp, &meta).map_err(std::io::Error::other)?;
        tmp.write_all(b"\n")?;
        tmp.write_all(text.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.entry_path(&key)).map_err(|e| e.error)?;
        Ok(key)
    }
}

fn decode_entry(key: &str, bytes: &[u8]) -> Result<String, String> {
    let newline = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or("missing metadata line")?;
    let meta: CacheMetadata =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| format!("bad metadata: {e}"))?;
    if meta.key != key {
        return Err(format!("metadata names key {}", meta.key));
    }
    let body = &bytes[newline + 1..];
    if body.len() != meta.text_bytes {
        return Err(format!("expected {} text bytes, found {}", meta.text_bytes, body.len()));
    }
    if hex::encode(Sha256::digest(body)) != meta.text_sha256 {
        return Err("text checksum mismatch".into());
    }
    String::from_utf8(body.to_vec()).map_err(|e| format!("text is not utf-8: {e}"))
}

fn complete_through(
    cache: &ResponseCache,
    backend: &dyn AgentBackend,
    req: &CompletionRequest,
) -> Result<Completion, BackendError> {
    let key = cache_key(req);
    if let Some(text) = cache.get(&key)? {
        return Ok(Completion {
            text,
            latency_ms: 0,
            cached: true,
        });
    }
    let started = Instant::now();
    let mut completion = backend.complete(req)?;
    cache.put(req, &completion.text)?;
    completion.cached = false;
    if completion.latency_ms == 0 {
        completion.latency_ms = started.elapsed().as_millis() as u64;
    }
    Ok(completion)
}

/// Serves `req` from `cache_dir` when present, otherwise asks `backend` and
/// stores the answer.
pub fn cached_complete(
    cache_dir: &Path,
    backend: &dyn AgentBackend,
    req: &CompletionRequest,
) -> Result<Completion, BackendError> {
    let cache = ResponseCache::open(cache_dir)?;
    complete_through(&cache, backend, req)
}

/// Wraps a backend with a [`ResponseCache`].
pub struct CachedBackend<B> {
    inner: B,
    cache: ResponseCache,
}

impl<B: AgentBackend> CachedBackend<B> {
    pub fn new(inner: B, cache: ResponseCache) -> Self {
        Self { inner, cache }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: AgentBackend> AgentBackend for CachedBackend<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        complete_through(&self.cache, &self.inner, req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FnBackend, MockScript, ScriptedBackend};
    use proptest::prelude::*;

    fn req(prompt: &str, temperature: f64) -> CompletionRequest {
        CompletionRequest {
            agent_id: "a".into(),
            model: "m".into(),
            prompt: prompt.into(),
            temperature,
            max_output_tokens: 64,
        }
    }

    #[test]
    fn miss_then_hit_makes_one_backend_call() {
        let dir = tempfile::tempdir().unwrap();
        let backend = ScriptedBackend::new(MockScript::new().with("a", ["answer"]));
        let first = cached_complete(dir.path(), &backend, &req("p", 0.0)).unwrap();
        let second = cached_complete(dir.path(), &backend, &req("p", 0.0)).unwrap();
        assert_eq!(first.text, "answer");
        assert!(!first.cached);
        assert_eq!(second.text, "answer");
        assert!(second.cached);
        assert_eq!(backend.call_count(), 1);
    }

    #[test]
    fn wrapper_marks_second_completion_cached() {
        let dir = tempfile::tempdir().unwrap();
        let backend = CachedBackend::new(
            FnBackend::new(|r: &CompletionRequest| Ok(format!("echo {}", r.prompt))),
            ResponseCache::open(dir.path()).unwrap(),
        );
        let a = backend.complete(&req("hi", 0.0)).unwrap();
        let b = backend.complete(&req("hi", 0.0)).unwrap();
        assert_eq!(a.text, b.text);
        assert!(b.cached && !a.cached);
        assert_eq!(backend.inner().call_count(), 1);
    }

    #[test]
    fn temperature_is_part_of_the_key() {
        assert_ne!(cache_key(&req("p", 0.0)), cache_key(&req("p", 0.7)));
        let mut other_model = req("p", 0.0);
        other_model.model = "n".into();
        assert_ne!(cache_key(&req("p", 0.0)), cache_key(&other_model));
        let mut other_agent = req("p", 0.0);
        other_agent.agent_id = "b".into();
        assert_eq!(cache_key(&req("p", 0.0)), cache_key(&other_agent));
    }

    #[test]
    fn truncated_entry_is_corrupt_evicted_and_requeried() {
        let dir = tempfile::tempdir().unwrap();
        let backend = ScriptedBackend::new(MockScript::new().with("a", ["first answer", "second answer"]));
        let r = req("p", 0.0);
        cached_complete(dir.path(), &backend, &r).unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let path = cache.entry_path(&cache_key(&r));
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();

        let err = cached_complete(dir.path(), &backend, &r).unwrap_err();
        assert!(matches!(err, BackendError::CacheCorrupt { .. }));
        assert!(!path.exists());

        let retry = cached_complete(dir.path(), &backend, &r).unwrap();
        assert_eq!(retry.text, "second answer");
        assert!(!retry.cached);
        assert_eq!(backend.call_count(), 2);
    }

    #[test]
    fn garbage_metadata_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let key = cache_key(&req("p", 0.0));
        fs::write(cache.entry_path(&key), b"not json\ntext").unwrap();
        assert!(matches!(cache.get(&key), Err(BackendError::CacheCorrupt { .. })));
        assert_eq!(cache.get(&key).unwrap(), None);
    }

    proptest! {
        #[test]
        fn stored_text_reads_back_byte_identical(text in "\\PC*", prompt in "[a-z]{1,12}") {
            let dir = tempfile::tempdir().unwrap();
            let cache = ResponseCache::open(dir.path()).unwrap();
            let r = req(&prompt, 0.0);
            let key = cache.put(&r, &text).unwrap();
            prop_assert_eq!(cache.get(&key).unwrap(), Some(text));
        }
    }
}
