use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use super::{read_f32s, write_f32s, RetrievalError};

/// Text to fixed-dimension vector. Must be deterministic with finite output.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Hashed TF-IDF over word unigrams and bigrams, L2-normalized.
///
/// Features are FNV-1a hashed into `dim` buckets; IDF weights are fitted per
/// bucket on a training corpus with smoothing `ln((1 + n) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfEmbedder {
    idf: Vec<f32>,
}

pub const DEFAULT_EMBED_DIM: usize = 4096;
const IDF_FILE: &str = "idf.f32";

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn bucket(feature: &str, dim: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(feature.as_bytes());
    (h.finish() % dim as u64) as usize
}

impl TfIdfEmbedder {
    pub const NAME: &'static str = "tfidf-hashed-uni-bigram";

    /// All IDF weights 1 (plain normalized term frequency).
    pub fn unfitted(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { idf: vec![1.0; dim] }
    }

    pub fn fit<'a, I>(texts: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        assert!(dim > 0, "embedding dimension must be positive");
        let mut df = vec![0u32; dim];
        let mut n = 0u32;
        let mut seen = Vec::new();
        for text in texts {
            n += 1;
            seen.clear();
            seen.extend(Self::features(text, dim));
            seen.sort_unstable();
            seen.dedup();
            for &b in &seen {
                df[b] += 1;
            }
        }
        let idf = df
            .iter()
            .map(|&d| ((1.0 + n as f64) / (1.0 + d as f64)).ln() as f32 + 1.0)
            .collect();
        Self { idf }
    }

    fn features(text: &str, dim: usize) -> impl Iterator<Item = usize> {
        let toks = tokens(text);
        let mut out: Vec<usize> = toks.iter().map(|t| bucket(t, dim)).collect();
        out.extend(toks.windows(2).map(|w| bucket(&format!("{} {}", w[0], w[1]), dim)));
        out.into_iter()
    }

    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        fs::create_dir_all(dir)?;
        write_f32s(&dir.join(IDF_FILE), &self.idf)
    }

    pub fn load(dir: &Path) -> Result<Self, RetrievalError> {
        let idf = read_f32s(&dir.join(IDF_FILE))?;
        if idf.is_empty() {
            return Err(RetrievalError::Format("empty idf table".into()));
        }
        Ok(Self { idf })
    }
}

impl Embedder for TfIdfEmbedder {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dim(&self) -> usize {
        self.idf.len()
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let dim = self.dim();
        let mut counts = vec![0u32; dim];
        for b in Self::features(text, dim) {
            counts[b] += 1;
        }
        let mut v: Vec<f32> = counts
            .iter()
            .zip(&self.idf)
            .map(|(&c, &w)| if c == 0 { 0.0 } else { (1.0 + (c as f32).ln()) * w })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}
