//! OpenAI-compatible chat client with a content-addressed record/replay cache.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::pets::Message;

pub const API_KEY_ENV: &str = "PET_SELECT_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
}

fn canonical_json(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push(':');
                canonical_json(&map[*k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical_json(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

/// SHA-256 (hex) over the canonical JSON of the request: sorted keys, no
/// whitespace. Model, every message and the sampling parameters are included.
pub fn cache_key(request: &ChatRequest) -> String {
    let value = serde_json::to_value(request).expect("request serializes");
    let mut canonical = String::new();
    canonical_json(&value, &mut canonical);
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    request: ChatRequest,
    response: CachedText,
    usage: Usage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedText {
    text: String,
}

/// On-disk cache: `<root>/<first two key chars>/<key>.json`.
#[derive(Debug)]
pub struct ReplayCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl ReplayCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), write_lock: Mutex::new(()) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2.min(key.len())]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<ChatResponse>, HarnessError> {
        let path = self.path_for(key);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(HarnessError::io(&path, e)),
        };
        let entry: CacheEntry =
            serde_json::from_str(&text).map_err(|e| HarnessError::Json(format!("{}: {e}", path.display())))?;
        Ok(Some(ChatResponse { text: entry.response.text, usage: entry.usage }))
    }

    pub fn put(&self, request: &ChatRequest, response: &ChatResponse) -> Result<String, HarnessError> {
        let key = cache_key(request);
        let path = self.path_for(&key);
        let entry = CacheEntry {
            request: request.clone(),
            response: CachedText { text: response.text.clone() },
            usage: response.usage,
        };
        let body = serde_json::to_string_pretty(&entry).map_err(|e| HarnessError::Json(e.to_string()))? + "\n";
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let dir = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, body).map_err(|e| HarnessError::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| HarnessError::io(&path, e))?;
        Ok(key)
    }
}

/// Something that can answer a chat request over the network (or pretend to).
pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, HarnessError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    /// Always call the endpoint; nothing is persisted.
    Live,
    /// Serve cache hits, call the endpoint on misses and persist the result.
    Record,
    /// Serve only from the cache; never touch the network.
    Replay,
}

impl std::str::FromStr for CacheMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(CacheMode::Live),
            "record" => Ok(CacheMode::Record),
            "replay" => Ok(CacheMode::Replay),
            other => Err(format!("unknown cache mode {other:?} (live|record|replay)")),
        }
    }
}

pub struct ChatClient {
    mode: CacheMode,
    cache: Option<ReplayCache>,
    backend: Option<Box<dyn ChatBackend>>,
    backend_calls: AtomicUsize,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("mode", &self.mode)
            .field("cache", &self.cache)
            .field("backend_calls", &self.backend_calls)
            .finish()
    }
}

impl ChatClient {
    pub fn replay(cache_dir: impl Into<PathBuf>) -> Self {
        Self { mode: CacheMode::Replay, cache: Some(ReplayCache::new(cache_dir)), backend: None, backend_calls: 0.into() }
    }

    pub fn record(backend: Box<dyn ChatBackend>, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: CacheMode::Record,
            cache: Some(ReplayCache::new(cache_dir)),
            backend: Some(backend),
            backend_calls: 0.into(),
        }
    }

    pub fn live(backend: Box<dyn ChatBackend>) -> Self {
        Self { mode: CacheMode::Live, cache: None, backend: Some(backend), backend_calls: 0.into() }
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    /// Number of requests forwarded to the backend so far.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    fn call_backend(&self, request: &ChatRequest) -> Result<ChatResponse, HarnessError> {
        let backend = self.backend.as_ref().ok_or_else(|| HarnessError::NotConfigured("no chat backend".into()))?;
        self.backend_calls.fetch_add(1, Ordering::SeqCst);
        backend.send(request)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, HarnessError> {
        match self.mode {
            CacheMode::Live => self.call_backend(request),
            CacheMode::Replay => {
                let key = cache_key(request);
                let cache = self.cache.as_ref().expect("replay client has a cache");
                cache.get(&key)?.ok_or(HarnessError::CacheMiss { key })
            }
            CacheMode::Record => {
                let cache = self.cache.as_ref().expect("record client has a cache");
                if let Some(hit) = cache.get(&cache_key(request))? {
                    return Ok(hit);
                }
                let response = self.call_backend(request)?;
                cache.put(request, &response)?;
                Ok(response)
            }
        }
    }
}

/// Chat-completions endpoint over HTTP.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    max_retries: usize,
    backoff: Duration,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self { endpoint: endpoint.into(), api_key, agent, max_retries: 3, backoff: Duration::from_millis(500) }
    }

    /// Reads the credential from [`API_KEY_ENV`].
    pub fn from_env(endpoint: impl Into<String>) -> Self {
        Self::new(endpoint, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_retries(mut self, max_retries: usize, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    fn body(request: &ChatRequest) -> Value {
        json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
        })
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

pub(crate) fn excerpt(body: &str) -> String {
    const LIMIT: usize = 512;
    match body.char_indices().nth(LIMIT) {
        Some((i, _)) => format!("{}...", &body[..i]),
        None => body.to_string(),
    }
}

pub(crate) fn post_json_with_retries(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &Value,
    max_retries: usize,
    backoff: Duration,
) -> Result<String, HarnessError> {
    let attempts = max_retries.max(1);
    let mut last = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(backoff * 2u32.pow(attempt as u32 - 1));
        }
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        match req.send(body.to_string()) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = resp.body_mut().read_to_string().unwrap_or_default();
                if (200..300).contains(&status) {
                    return Ok(text);
                }
                if status == 429 || status >= 500 {
                    last = format!("HTTP {status}: {}", excerpt(&text));
                    if attempt + 1 < attempts {
                        continue;
                    }
                }
                return Err(HarnessError::Provider { status, body: excerpt(&text) });
            }
            Err(e) => {
                log::warn!("request to {url} failed (attempt {}): {e}", attempt + 1);
                last = e.to_string();
            }
        }
    }
    Err(HarnessError::Transport { attempts, message: last })
}

impl ChatBackend for HttpBackend {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, HarnessError> {
        let text = post_json_with_retries(
            &self.agent,
            &self.endpoint,
            self.api_key.as_deref(),
            &Self::body(request),
            self.max_retries,
            self.backoff,
        )?;
        let wire: WireResponse =
            serde_json::from_str(&text).map_err(|e| HarnessError::Json(format!("chat response: {e}")))?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| HarnessError::Json("chat response has no choices[0].message.content".into()))?;
        Ok(ChatResponse { text: content, usage: wire.usage.unwrap_or_default() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(content: &str, temperature: f64) -> ChatRequest {
        ChatRequest { model: "m".into(), messages: vec![Message::user(content)], temperature }
    }

    #[test]
    fn cache_key_properties() {
        assert_eq!(cache_key(&request("hello", 0.0)), cache_key(&request("hello", 0.0)));
        assert_ne!(cache_key(&request("hello", 0.0)), cache_key(&request("hellp", 0.0)));
        assert_ne!(cache_key(&request("hello", 0.0)), cache_key(&request("hello", 0.7)));
        assert_eq!(cache_key(&request("x", 0.0)).len(), 64);
    }

    #[test]
    fn canonical_form_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"b": 1, "a": {"d": [1, 2], "c": "x"}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a": {"c": "x", "d": [1, 2]}, "b": 1}"#).unwrap();
        let (mut sa, mut sb) = (String::new(), String::new());
        canonical_json(&a, &mut sa);
        canonical_json(&b, &mut sb);
        assert_eq!(sa, sb);
        assert_eq!(sa, r#"{"a":{"c":"x","d":[1,2]},"b":1}"#);
    }

    struct Fixed(Usage);

    impl ChatBackend for Fixed {
        fn send(&self, _: &ChatRequest) -> Result<ChatResponse, HarnessError> {
            Ok(ChatResponse { text: "x = 1".into(), usage: self.0 })
        }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let usage = Usage { prompt_tokens: 12, completion_tokens: 30 };
        let recorder = ChatClient::record(Box::new(Fixed(usage)), dir.path());
        let req = request("q", 0.0);
        let first = recorder.complete(&req).unwrap();
        let again = recorder.complete(&req).unwrap();
        assert_eq!(first, again);
        assert_eq!(recorder.backend_calls(), 1);
        let key = cache_key(&req);
        assert!(dir.path().join(&key[..2]).join(format!("{key}.json")).exists());

        let replay = ChatClient::replay(dir.path());
        let hit = replay.complete(&req).unwrap();
        assert_eq!(hit.usage.total(), 42);
        assert_eq!(replay.backend_calls(), 0);
        match replay.complete(&request("other", 0.0)) {
            Err(HarnessError::CacheMiss { key }) => assert_eq!(key, cache_key(&request("other", 0.0))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn excerpt_truncates() {
        let long = "a".repeat(600);
        assert_eq!(excerpt(&long).len(), 515);
        assert_eq!(excerpt("short"), "short");
    }
}
