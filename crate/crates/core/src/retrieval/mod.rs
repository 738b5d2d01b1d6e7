//! Nearest-neighbour demonstration selection and reasoning augmentation.

mod augment;
mod embed;
mod index;

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::backend::{Agent, BackendError};
use crate::domain::{DiscriminatorDemo, DomainError, Example, GeneratorDemo, NegotiationConfig};

pub use augment::{build_discriminator_demos, explanation_prompt, infuse_reasoning, reasoning_prompt};
pub use embed::{Embedder, TfIdfEmbedder, DEFAULT_EMBED_DIM};
pub use index::{cosine, knn_retrieve, IndexManifest, TrainIndex};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training example {0} has no gold label")]
    MissingGold(String),
    #[error("no step-by-step reasoning could be parsed for example {0}")]
    MalformedReasoning(String),
    #[error("empty explanation for demonstration {0:?}")]
    MalformedExplanation(String),
    #[error("no demonstrations to extend")]
    EmptyDemos,
    #[error("malformed index: {0}")]
    Format(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn write_f32s(path: &Path, values: &[f32]) -> Result<(), RetrievalError> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f32s(path: &Path) -> Result<Vec<f32>, RetrievalError> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(RetrievalError::Format(format!(
            "{} is {} bytes, not a whole number of f32 values",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Supplies demonstrations for each test input.
pub trait DemoSource: Send + Sync {
    fn generator_demos(
        &self,
        input: &Example,
        generator: &Agent,
        config: &NegotiationConfig,
    ) -> Result<Vec<GeneratorDemo>, RetrievalError>;

    fn discriminator_demos(
        &self,
        input: &Example,
        generator: &Agent,
        discriminator: &Agent,
        config: &NegotiationConfig,
    ) -> Result<Vec<DiscriminatorDemo>, RetrievalError>;
}

/// Zero-shot: every prompt is rendered without demonstrations.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoDemos;

impl DemoSource for NoDemos {
    fn generator_demos(&self, _: &Example, _: &Agent, _: &NegotiationConfig) -> Result<Vec<GeneratorDemo>, RetrievalError> {
        Ok(Vec::new())
    }

    fn discriminator_demos(
        &self,
        _: &Example,
        _: &Agent,
        _: &Agent,
        _: &NegotiationConfig,
    ) -> Result<Vec<DiscriminatorDemo>, RetrievalError> {
        Ok(Vec::new())
    }
}

/// The same demonstrations for every input and agent.
#[derive(Debug, Clone, Default)]
pub struct FixedDemos {
    pub generator: Vec<GeneratorDemo>,
    pub discriminator: Vec<DiscriminatorDemo>,
}

impl DemoSource for FixedDemos {
    fn generator_demos(&self, _: &Example, _: &Agent, _: &NegotiationConfig) -> Result<Vec<GeneratorDemo>, RetrievalError> {
        Ok(self.generator.clone())
    }

    fn discriminator_demos(
        &self,
        _: &Example,
        _: &Agent,
        _: &Agent,
        _: &NegotiationConfig,
    ) -> Result<Vec<DiscriminatorDemo>, RetrievalError> {
        Ok(self.discriminator.clone())
    }
}

type GenKey = (String, String, bool);
type DiscKey = (String, String, String, bool);

/// k-NN demonstrations from a training index, augmented by the agent that
/// will read them. Augmented demos are memoized per (agent, train example),
/// so each is produced once per run however many inputs retrieve it.
pub struct RetrievedDemos {
    index: TrainIndex,
    embedder: Arc<dyn Embedder>,
    gen_cache: Mutex<HashMap<GenKey, GeneratorDemo>>,
    disc_cache: Mutex<HashMap<DiscKey, DiscriminatorDemo>>,
}

impl RetrievedDemos {
    pub fn new(index: TrainIndex, embedder: Arc<dyn Embedder>) -> Result<Self, RetrievalError> {
        if index.dim() != embedder.dim() {
            return Err(RetrievalError::DimensionMismatch {
                expected: index.dim(),
                got: embedder.dim(),
            });
        }
        Ok(Self {
            index,
            embedder,
            gen_cache: Mutex::new(HashMap::new()),
            disc_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn index(&self) -> &TrainIndex {
        &self.index
    }

    fn neighbours(&self, input: &Example, k: usize) -> Result<Vec<&Example>, RetrievalError> {
        Ok(knn_retrieve(&self.index, self.embedder.as_ref(), input, k)?
            .into_iter()
            .map(|(ex, _)| ex)
            .collect())
    }

    // The cache lock is held while augmenting so concurrent sessions never
    // pay twice for the same demonstration.
    fn augmented(
        &self,
        neighbours: &[&Example],
        generator: &Agent,
        config: &NegotiationConfig,
    ) -> Result<Vec<GeneratorDemo>, RetrievalError> {
        let key = |ex: &Example| (generator.id.clone(), ex.id.clone(), config.reasoning_enabled);
        let mut cache = self.gen_cache.lock().expect("demo cache poisoned");
        let missing: Vec<Example> = neighbours
            .iter()
            .filter(|ex| !cache.contains_key(&key(ex)))
            .map(|ex| (*ex).clone())
            .collect();
        for (ex, demo) in missing.iter().zip(infuse_reasoning(&missing, generator, config)?) {
            cache.insert(key(ex), demo);
        }
        Ok(neighbours.iter().map(|ex| cache[&key(ex)].clone()).collect())
    }
}

impl DemoSource for RetrievedDemos {
    fn generator_demos(
        &self,
        input: &Example,
        generator: &Agent,
        config: &NegotiationConfig,
    ) -> Result<Vec<GeneratorDemo>, RetrievalError> {
        let neighbours = self.neighbours(input, config.k_demos)?;
        self.augmented(&neighbours, generator, config)
    }

    fn discriminator_demos(
        &self,
        input: &Example,
        generator: &Agent,
        discriminator: &Agent,
        config: &NegotiationConfig,
    ) -> Result<Vec<DiscriminatorDemo>, RetrievalError> {
        let neighbours = self.neighbours(input, config.k_demos)?;
        if neighbours.is_empty() {
            return Ok(Vec::new());
        }
        let gen_demos = self.augmented(&neighbours, generator, config)?;
        let key = |ex: &Example| {
            (
                generator.id.clone(),
                discriminator.id.clone(),
                ex.id.clone(),
                config.reasoning_enabled,
            )
        };
        let mut cache = self.disc_cache.lock().expect("demo cache poisoned");
        let missing: Vec<(usize, GeneratorDemo)> = neighbours
            .iter()
            .zip(&gen_demos)
            .enumerate()
            .filter(|(_, (ex, _))| !cache.contains_key(&key(ex)))
            .map(|(i, (_, d))| (i, d.clone()))
            .collect();
        if !missing.is_empty() {
            let demos: Vec<GeneratorDemo> = missing.iter().map(|(_, d)| d.clone()).collect();
            let built = build_discriminator_demos(&demos, discriminator, config)?;
            for ((i, _), demo) in missing.iter().zip(built) {
                cache.insert(key(neighbours[*i]), demo);
            }
        }
        Ok(neighbours.iter().map(|ex| cache[&key(ex)].clone()).collect())
    }
}
