use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{EmbedError, Embeddings};
use crate::harness::{post_json_with_retries, API_KEY_ENV};
use crate::rank::RankedDataset;

/// Source of base embeddings. `task_id` is supplied when the query is a known
/// dataset task; free-text queries pass `None`.
pub trait EmbeddingProvider: Send + Sync {
    fn embed_query(&self, task_id: Option<&str>, text: &str) -> Result<Vec<f64>, EmbedError>;
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureLine {
    task_id: String,
    vector: Vec<f64>,
}

/// Precomputed vectors keyed by task id, read from JSONL. Free text resolves
/// through registered aliases (typically each task's prompt).
#[derive(Debug, Clone, Default)]
pub struct FixtureProvider {
    vectors: BTreeMap<String, Vec<f64>>,
    aliases: HashMap<String, String>,
}

impl FixtureProvider {
    pub fn new(vectors: Embeddings) -> Result<Self, EmbedError> {
        validate(&vectors)?;
        Ok(Self { vectors, aliases: HashMap::new() })
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let text = std::fs::read_to_string(path).map_err(|e| EmbedError::Io(format!("{}: {e}", path.display())))?;
        let mut vectors = BTreeMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row: FixtureLine = serde_json::from_str(line)
                .map_err(|e| EmbedError::Io(format!("{} line {}: {e}", path.display(), i + 1)))?;
            vectors.insert(row.task_id, row.vector);
        }
        Self::new(vectors)
    }

    pub fn write(vectors: &Embeddings, path: &Path) -> Result<(), EmbedError> {
        let mut out = String::new();
        for (id, v) in vectors {
            let line = FixtureLine { task_id: id.clone(), vector: v.clone() };
            out.push_str(&serde_json::to_string(&line).map_err(|e| EmbedError::Io(e.to_string()))?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| EmbedError::Io(format!("{}: {e}", path.display())))
    }

    /// Lets each record's prompt text stand in for its id.
    pub fn with_prompt_aliases(mut self, ranked: &RankedDataset) -> Self {
        for r in &ranked.records {
            self.aliases.insert(r.prompt.clone(), r.task_id.clone());
        }
        self
    }

    pub fn alias(mut self, text: impl Into<String>, task_id: impl Into<String>) -> Self {
        self.aliases.insert(text.into(), task_id.into());
        self
    }

    pub fn vectors(&self) -> &Embeddings {
        &self.vectors
    }
}

impl EmbeddingProvider for FixtureProvider {
    fn embed_query(&self, task_id: Option<&str>, text: &str) -> Result<Vec<f64>, EmbedError> {
        let id = task_id.or_else(|| self.aliases.get(text).map(String::as_str)).unwrap_or(text);
        self.vectors.get(id).cloned().ok_or_else(|| EmbedError::FixtureMiss(id.to_string()))
    }
}

/// Embedding endpoint: POST `{model, input: [text]}`, reply `{data: [{embedding}]}`.
pub struct HttpEmbeddingProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    max_retries: usize,
    backoff: Duration,
}

#[derive(Deserialize)]
struct WireEmbeddings {
    data: Vec<WireEmbedding>,
}

#[derive(Deserialize)]
struct WireEmbedding {
    embedding: Vec<f64>,
}

impl HttpEmbeddingProvider {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            agent,
            max_retries: 3,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self::new(endpoint, model, std::env::var(API_KEY_ENV).ok())
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed_query(&self, _task_id: Option<&str>, text: &str) -> Result<Vec<f64>, EmbedError> {
        let body = json!({ "model": self.model, "input": [text] });
        let reply = post_json_with_retries(
            &self.agent,
            &self.endpoint,
            self.api_key.as_deref(),
            &body,
            self.max_retries,
            self.backoff,
        )
        .map_err(|e| EmbedError::Provider(e.to_string()))?;
        let wire: WireEmbeddings =
            serde_json::from_str(&reply).map_err(|e| EmbedError::Provider(format!("embedding response: {e}")))?;
        let v = wire
            .data
            .into_iter()
            .next()
            .ok_or_else(|| EmbedError::Provider("embedding response has no data".into()))?
            .embedding;
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Provider("embedding is empty or non-finite".into()));
        }
        Ok(v)
    }
}

/// Embeds every record of a ranked dataset.
pub fn embed_dataset(provider: &dyn EmbeddingProvider, ranked: &RankedDataset) -> Result<Embeddings, EmbedError> {
    let mut out = BTreeMap::new();
    for r in &ranked.records {
        out.insert(r.task_id.clone(), provider.embed_query(Some(&r.task_id), &r.prompt)?);
    }
    validate(&out)?;
    Ok(out)
}

/// Checks that all vectors are finite, nonempty and share one dimension.
pub fn validate(vectors: &Embeddings) -> Result<Option<usize>, EmbedError> {
    let mut dim = None;
    for (id, v) in vectors {
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Domain(format!("vector for {id} is empty or non-finite")));
        }
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => return Err(EmbedError::DimensionMismatch { expected: d, got: v.len() }),
            _ => {}
        }
    }
    Ok(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_lookup() {
        let vectors = BTreeMap::from([("a".to_string(), vec![1.0, 2.0]), ("b".to_string(), vec![3.0, 4.0])]);
        let p = FixtureProvider::new(vectors).unwrap().alias("add two numbers", "b");
        assert_eq!(p.embed_query(Some("a"), "ignored").unwrap(), vec![1.0, 2.0]);
        assert_eq!(p.embed_query(None, "add two numbers").unwrap(), vec![3.0, 4.0]);
        assert_eq!(p.embed_query(None, "add two numbers").unwrap(), p.embed_query(None, "add two numbers").unwrap());
        assert!(matches!(p.embed_query(Some("zzz"), ""), Err(EmbedError::FixtureMiss(id)) if id == "zzz"));
    }

    #[test]
    fn fixture_file_roundtrip() {
        let vectors = BTreeMap::from([("x/1".to_string(), vec![0.1, -0.2, 0.3])]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        FixtureProvider::write(&vectors, &path).unwrap();
        assert_eq!(FixtureProvider::load(&path).unwrap().vectors(), &vectors);
    }

    #[test]
    fn rejects_ragged_vectors() {
        let vectors = BTreeMap::from([("a".to_string(), vec![1.0]), ("b".to_string(), vec![1.0, 2.0])]);
        assert!(matches!(FixtureProvider::new(vectors), Err(EmbedError::DimensionMismatch { expected: 1, got: 2 })));
    }
}
