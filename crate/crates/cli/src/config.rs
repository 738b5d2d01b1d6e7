//! Run configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use negotiate_core::domain::NegotiationConfig;
use negotiate_core::evaluation::{DatasetFormat, DatasetName, DatasetSpec, ModeKind, PipelineMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: ModeConfig,
    pub agents: Vec<AgentConfig>,
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub negotiation: NegotiationConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub limit: Option<usize>,
    /// Shuffle each dataset with this seed before applying `limit`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub templates: TemplatePaths,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_concurrency() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub kind: String,
    pub agents: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    /// OpenAI-compatible chat completions endpoint.
    Openai,
    /// Offline word-list classifier.
    Lexicon,
    /// Replays a JSON array of responses, in order.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: String,
    pub kind: AgentKind,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub base_url: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
    #[serde(default)]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub format: Option<String>,
    /// Labeled pool for demonstration retrieval; zero-shot without it.
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatePaths {
    #[serde(default)]
    pub generator: Option<PathBuf>,
    #[serde(default)]
    pub discriminator: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// Where built indexes are kept, one subdirectory per dataset.
    #[serde(default)]
    pub index_dir: Option<PathBuf>,
}

fn default_embed_dim() -> usize {
    negotiate_core::retrieval::DEFAULT_EMBED_DIM
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            embed_dim: default_embed_dim(),
            index_dir: None,
        }
    }
}

/// Command-line values that replace their config-file counterparts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub limit: Option<usize>,
    pub seed: Option<u64>,
    pub concurrency: Option<usize>,
    pub no_reasoning: bool,
    pub max_turns: Option<u32>,
    pub k: Option<usize>,
}

impl RunConfig {
    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        if let Some(p) = &mut self.cache_dir {
            fix(p);
        }
        if let Some(p) = &mut self.retrieval.index_dir {
            fix(p);
        }
        for p in [&mut self.templates.generator, &mut self.templates.discriminator].into_iter().flatten() {
            fix(p);
        }
        for a in &mut self.agents {
            if let Some(p) = &mut a.script {
                fix(p);
            }
        }
        for d in &mut self.datasets {
            fix(&mut d.path);
            if let Some(p) = &mut d.train {
                fix(p);
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if o.limit.is_some() {
            self.limit = o.limit;
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if let Some(c) = o.concurrency {
            self.concurrency = c;
        }
        if o.no_reasoning {
            self.negotiation.reasoning_enabled = false;
        }
        if let Some(t) = o.max_turns {
            self.negotiation.max_turns = t;
        }
        if let Some(k) = o.k {
            self.negotiation.k_demos = k;
        }
    }

    pub fn mode(&self) -> Result<PipelineMode, CliError> {
        let kind: ModeKind = self.mode.kind.parse().map_err(|e| CliError::Config(format!("mode: {e}")))?;
        PipelineMode::new(kind, self.mode.agents.clone()).map_err(|e| CliError::Config(format!("mode: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let config = |m: String| Err(CliError::Config(m));
        self.negotiation
            .validate()
            .map_err(|e| CliError::Config(format!("negotiation: {e}")))?;
        if self.concurrency == 0 {
            return config("concurrency must be at least 1".into());
        }
        let mut seen = Vec::new();
        for a in &self.agents {
            if seen.contains(&a.id.as_str()) {
                return config(format!("agent {:?} is defined twice", a.id));
            }
            seen.push(&a.id);
            match a.kind {
                AgentKind::Openai if a.model.is_none() || a.base_url.is_none() => {
                    return config(format!("agent {:?}: openai agents need model and base_url", a.id))
                }
                AgentKind::Scripted => match &a.script {
                    None => return config(format!("agent {:?}: scripted agents need a script file", a.id)),
                    Some(p) if !p.is_file() => {
                        return config(format!("agent {:?}: script {} does not exist", a.id, p.display()))
                    }
                    _ => {}
                },
                _ => {}
            }
            if a.max_output_tokens == Some(0) {
                return config(format!("agent {:?}: max_output_tokens must be positive", a.id));
            }
        }
        for id in &self.mode.agents {
            if !seen.contains(&id.as_str()) {
                return config(format!("mode refers to unknown agent {id:?}"));
            }
        }
        self.mode()?;
        if self.datasets.is_empty() {
            return config("no datasets configured".into());
        }
        for d in &self.datasets {
            d.spec()?;
            if !d.path.is_file() {
                return config(format!("dataset {}: {} does not exist", d.name, d.path.display()));
            }
            if let Some(train) = &d.train {
                if !train.is_file() {
                    return config(format!("dataset {}: train file {} does not exist", d.name, train.display()));
                }
            }
        }
        for p in [&self.templates.generator, &self.templates.discriminator].into_iter().flatten() {
            if !p.is_file() {
                return config(format!("template {} does not exist", p.display()));
            }
        }
        if self.retrieval.embed_dim == 0 {
            return config("retrieval.embed_dim must be positive".into());
        }
        Ok(())
    }
}

impl DatasetConfig {
    pub fn dataset_name(&self) -> Result<DatasetName, CliError> {
        self.name
            .parse()
            .map_err(|e| CliError::Config(format!("dataset {}: {e}", self.name)))
    }

    fn with_options(&self, path: &Path) -> Result<DatasetSpec, CliError> {
        let mut spec = DatasetSpec::new(self.dataset_name()?, path);
        if let Some(f) = &self.format {
            let format: DatasetFormat = f
                .parse()
                .map_err(|e| CliError::Config(format!("dataset {}: {e}", self.name)))?;
            spec = spec.with_format(format);
        }
        if let Some(map) = &self.labels {
            spec = spec.with_label_map(map.clone());
        }
        Ok(spec)
    }

    pub fn spec(&self) -> Result<DatasetSpec, CliError> {
        self.with_options(&self.path)
    }

    pub fn train_spec(&self) -> Result<Option<DatasetSpec>, CliError> {
        self.train.as_deref().map(|p| self.with_options(p)).transpose()
    }
}
