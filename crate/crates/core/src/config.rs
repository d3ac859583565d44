//! The experiment manifest: one TOML file describing inputs, endpoints,
//! training settings and the output directory. Relative paths resolve
//! against the file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::embed::TripletConfig;
use crate::harness::{CacheMode, DatasetFormat};
use crate::metrics::MetricWeights;
use crate::select::SelectTrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub jobs: usize,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub llm: LlmConfig,
    pub sandbox: SandboxConfig,
    pub exemplars: ExemplarConfig,
    pub embedding: EmbeddingConfig,
    pub metrics: MetricsConfig,
    pub triplet: TripletConfig,
    pub select: SelectTrainConfig,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            output_dir: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            llm: LlmConfig::default(),
            sandbox: SandboxConfig::default(),
            exemplars: ExemplarConfig::default(),
            embedding: EmbeddingConfig::default(),
            metrics: MetricsConfig::default(),
            triplet: TripletConfig::default(),
            select: SelectTrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    pub format: DatasetFormat,
    pub categories: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { path: None, format: DatasetFormat::Mbpp, categories: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_debug_rounds: usize,
    pub cache_mode: CacheMode,
    pub cache_dir: Option<PathBuf>,
    pub max_retries: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            max_debug_rounds: 1,
            cache_mode: CacheMode::Replay,
            cache_dir: None,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    pub python: PathBuf,
    pub timeout_secs: f64,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self { python: PathBuf::from("python3"), timeout_secs: 10.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExemplarConfig {
    pub pool: Option<PathBuf>,
    /// Seed of the single exemplar draw per sweep, independent of `--seed`.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// JSONL of precomputed vectors; takes precedence over the endpoint.
    pub fixture: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: String,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { fixture: None, endpoint: None, model: "text-embedding-3-small".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub weights: MetricWeights,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub folds: usize,
    pub label: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { folds: 5, label: "evaluation".into() }
    }
}

impl Config {
    /// Parses, resolves relative paths against `base` and validates.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [
            self.dataset.path.as_mut(),
            self.dataset.categories.as_mut(),
            self.llm.cache_dir.as_mut(),
            self.exemplars.pool.as_mut(),
            self.embedding.fixture.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if self.sandbox.python.components().count() > 1 {
            fix(&mut self.sandbox.python);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for p in [&self.dataset.path, &self.dataset.categories, &self.exemplars.pool, &self.embedding.fixture]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(ConfigError::Invalid(format!("referenced path {} does not exist", p.display())));
            }
        }
        if self.llm.cache_mode == CacheMode::Replay {
            match &self.llm.cache_dir {
                Some(d) if d.is_dir() => {}
                Some(d) => return Err(ConfigError::Invalid(format!("cache directory {} does not exist", d.display()))),
                None => return Err(ConfigError::Invalid("replay mode needs llm.cache_dir".into())),
            }
        } else if self.llm.endpoint.is_none() {
            return Err(ConfigError::Invalid(format!("cache mode {:?} needs llm.endpoint", self.llm.cache_mode)));
        }
        if self.llm.cache_mode == CacheMode::Record && self.llm.cache_dir.is_none() {
            return Err(ConfigError::Invalid("record mode needs llm.cache_dir".into()));
        }
        if !(self.sandbox.timeout_secs > 0.0 && self.sandbox.timeout_secs.is_finite()) {
            return Err(ConfigError::Invalid("sandbox.timeout_secs must be positive".into()));
        }
        if self.eval.folds < 2 {
            return Err(ConfigError::Invalid("eval.folds must be at least 2".into()));
        }
        self.triplet.validate().map_err(|e| ConfigError::Invalid(format!("triplet: {e}")))?;
        self.select.validate().map_err(|e| ConfigError::Invalid(format!("select: {e}")))?;
        Ok(())
    }
}
