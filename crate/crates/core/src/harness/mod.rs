//! Benchmark execution: datasets, the chat client with record/replay, the test
//! sandbox and the PET sweep that produces execution records.

mod client;
mod dataset;
mod sandbox;
mod sweep;

use std::path::Path;

pub use client::{
    cache_key, CacheMode, ChatBackend, ChatClient, ChatRequest, ChatResponse, HttpBackend, ReplayCache, Usage,
    API_KEY_ENV,
};
pub(crate) use client::post_json_with_retries;
pub use dataset::{apply_categories, load_categories, load_dataset, parse_dataset, Category, DatasetFormat, TaskInstance};
pub use sandbox::{Sandbox, TestOutcome, TestStatus};
pub use sweep::{
    benchmark, load_records, record_path, run_pet, BenchmarkReport, ExecutionRecord, RunFailure, RunSettings,
};

use crate::pets::PetError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("schema error: missing or invalid field {field:?} in row {row}")]
    Schema { field: &'static str, row: usize },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("json error: {0}")]
    Json(String),
    #[error("replay cache miss for key {key}")]
    CacheMiss { key: String },
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("provider returned HTTP {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("no live endpoint configured: {0}")]
    NotConfigured(String),
    #[error(transparent)]
    Pet(#[from] PetError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}
