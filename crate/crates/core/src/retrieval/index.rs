use std::cmp::Ordering;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_f32s, write_f32s, Embedder, RetrievalError};
use crate::domain::Example;

const MANIFEST_FILE: &str = "manifest.json";
const VECTORS_FILE: &str = "vectors.f32";
const EXAMPLES_FILE: &str = "examples.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub embedder: String,
    pub dim: usize,
    pub count: usize,
}

/// Labeled training examples with their embeddings, searched by exact scan.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainIndex {
    embedder: String,
    dim: usize,
    examples: Vec<Example>,
    vectors: Vec<f32>,
    norms: Vec<f64>,
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Cosine similarity in `[-1, 1]`; zero when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    score(dot(a, b), norm(a), norm(b))
}

fn score(dot: f64, na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

impl TrainIndex {
    pub fn build(examples: Vec<Example>, embedder: &dyn Embedder) -> Result<Self, RetrievalError> {
        let dim = embedder.dim();
        let mut vectors = Vec::with_capacity(examples.len() * dim);
        for ex in &examples {
            if ex.gold.is_none() {
                return Err(RetrievalError::MissingGold(ex.id.clone()));
            }
            let v = embedder.embed(&ex.text);
            if v.len() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            vectors.extend(v);
        }
        Self::from_parts(embedder.name().to_string(), dim, examples, vectors)
    }

    /// Assembles an index from precomputed row-major vectors.
    pub fn from_parts(
        embedder: String,
        dim: usize,
        examples: Vec<Example>,
        vectors: Vec<f32>,
    ) -> Result<Self, RetrievalError> {
        if dim == 0 {
            return Err(RetrievalError::Format("dimension must be positive".into()));
        }
        if vectors.len() != examples.len() * dim {
            return Err(RetrievalError::Format(format!(
                "{} floats for {} rows of dimension {dim}",
                vectors.len(),
                examples.len()
            )));
        }
        if let Some(ex) = examples.iter().find(|e| e.gold.is_none()) {
            return Err(RetrievalError::MissingGold(ex.id.clone()));
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(RetrievalError::Format("non-finite vector entry".into()));
        }
        let norms = vectors.chunks(dim).map(norm).collect();
        Ok(Self {
            embedder,
            dim,
            examples,
            vectors,
            norms,
        })
    }

    pub fn embedder_name(&self) -> &str {
        &self.embedder
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        &self.vectors[row * self.dim..(row + 1) * self.dim]
    }

    /// Top `min(k, len)` rows by cosine similarity, descending, ties broken
    /// by ascending row position.
    pub fn nearest(&self, query: &[f32], k: usize) -> Result<Vec<(usize, f64)>, RetrievalError> {
        if query.len() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let k = k.min(self.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let qn = norm(query);
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .map(|row| (row, score(dot(self.vector(row), query), self.norms[row], qn)))
            .collect();
        let order = |a: &(usize, f64), b: &(usize, f64)| -> Ordering {
            b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored)
    }

    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        fs::create_dir_all(dir)?;
        let manifest = IndexManifest {
            embedder: self.embedder.clone(),
            dim: self.dim,
            count: self.len(),
        };
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_vec_pretty(&manifest).map_err(|e| RetrievalError::Format(e.to_string()))?,
        )?;
        write_f32s(&dir.join(VECTORS_FILE), &self.vectors)?;
        let mut out = BufWriter::new(File::create(dir.join(EXAMPLES_FILE))?);
        for ex in &self.examples {
            serde_json::to_writer(&mut out, ex).map_err(|e| RetrievalError::Format(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, RetrievalError> {
        let manifest: IndexManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)
            .map_err(|e| RetrievalError::Format(format!("manifest: {e}")))?;
        let vectors = read_f32s(&dir.join(VECTORS_FILE))?;
        let reader = BufReader::new(File::open(dir.join(EXAMPLES_FILE))?);
        let mut examples = Vec::with_capacity(manifest.count);
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            examples.push(
                serde_json::from_str(&line)
                    .map_err(|e| RetrievalError::Format(format!("examples line {}: {e}", n + 1)))?,
            );
        }
        if examples.len() != manifest.count {
            return Err(RetrievalError::Format(format!(
                "manifest promises {} examples, found {}",
                manifest.count,
                examples.len()
            )));
        }
        Self::from_parts(manifest.embedder, manifest.dim, examples, vectors)
    }
}

/// The `k` training examples most similar to `query` under `embedder`.
pub fn knn_retrieve<'a>(
    index: &'a TrainIndex,
    embedder: &dyn Embedder,
    query: &Example,
    k: usize,
) -> Result<Vec<(&'a Example, f64)>, RetrievalError> {
    if embedder.dim() != index.dim() {
        return Err(RetrievalError::DimensionMismatch {
            expected: index.dim(),
            got: embedder.dim(),
        });
    }
    let q = embedder.embed(&query.text);
    Ok(index
        .nearest(&q, k)?
        .into_iter()
        .map(|(row, s)| (&index.examples[row], s))
        .collect())
}
