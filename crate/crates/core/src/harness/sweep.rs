use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatClient, ChatRequest, HarnessError, Sandbox, TaskInstance, TestOutcome, Usage};
use crate::pets::{advance, render, Advance, ExemplarSet, Message, PetId, ProtocolState, StageInputs, TestVerdict};

/// One (task, PET) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub task_id: String,
    pub pet: PetId,
    pub transcript: Vec<Message>,
    /// Provider-reported usage per model response, in order.
    pub rounds: Vec<Usage>,
    pub final_code: String,
    pub total_tokens: u64,
    pub passed: bool,
    pub per_test: Vec<TestOutcome>,
    /// Ids of the exemplars shown in the prompt, if any.
    #[serde(default)]
    pub exemplar_ids: Vec<String>,
}

impl ExecutionRecord {
    pub fn model_responses(&self) -> usize {
        self.rounds.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub model: String,
    pub temperature: f64,
    pub max_debug_rounds: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { model: "gpt-3.5-turbo".into(), temperature: 0.0, max_debug_rounds: 1 }
    }
}

/// Drives one PET on one task to completion and scores the final code
/// against every test.
pub fn run_pet(
    task: &TaskInstance,
    pet: PetId,
    client: &ChatClient,
    exemplars: Option<&ExemplarSet>,
    settings: &RunSettings,
    sandbox: &Sandbox,
) -> Result<ExecutionRecord, HarnessError> {
    let shown_test = task.tests.first().cloned();
    let exemplars = exemplars.filter(|_| pet.uses_examples());
    let mut state = ProtocolState::new(pet, settings.max_debug_rounds);
    let mut rounds = Vec::new();
    let final_code = loop {
        let aux = StageInputs { test_case: shown_test.clone(), ..state.aux() };
        let messages = render(&state, &task.prompt, exemplars, &aux)?;
        let prompt = messages.last().expect("render yields a prompt").content.clone();
        let request = ChatRequest { model: settings.model.clone(), messages, temperature: settings.temperature };
        let response = client.complete(&request)?;
        rounds.push(response.usage);
        let outcome = if state.wants_test_outcome() {
            let code = crate::pets::extract_code(&response.text);
            let shown = shown_test.as_deref().unwrap_or_default();
            let verdict = sandbox.run_one(&code, shown)?;
            Some(if verdict.passed() { TestVerdict::Pass } else { TestVerdict::Fail })
        } else {
            None
        };
        match advance(state, &prompt, &response.text, outcome)? {
            Advance::Next(next) => state = next,
            Advance::Done { state: done, code } => {
                state = done;
                break code;
            }
        }
    };
    let per_test = sandbox.run_tests(&final_code, &task.tests)?;
    let passed = per_test.iter().all(TestOutcome::passed);
    Ok(ExecutionRecord {
        task_id: task.id.clone(),
        pet,
        transcript: state.transcript,
        total_tokens: rounds.iter().map(Usage::total).sum(),
        rounds,
        final_code,
        passed,
        per_test,
        exemplar_ids: exemplars.map(|e| e.task_ids().into_iter().collect()).unwrap_or_default(),
    })
}

fn file_stem(task_id: &str) -> String {
    task_id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

/// `<out_dir>/<pet>/<task_id>.json`, with unsafe id characters replaced.
pub fn record_path(out_dir: &Path, pet: PetId, task_id: &str) -> PathBuf {
    out_dir.join(pet.slug()).join(format!("{}.json", file_stem(task_id)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunFailure {
    pub task_id: String,
    pub pet: PetId,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct BenchmarkReport {
    /// Successful records in task order, then PET order.
    pub records: Vec<ExecutionRecord>,
    pub failures: Vec<RunFailure>,
    /// Tasks whose records were already complete on disk.
    pub reused_tasks: usize,
}

fn read_record(path: &Path) -> Option<ExecutionRecord> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_record(path: &Path, record: &ExecutionRecord) -> Result<(), HarnessError> {
    let dir = path.parent().expect("record path has a parent");
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let body = serde_json::to_string_pretty(record).map_err(|e| HarnessError::Json(e.to_string()))? + "\n";
    std::fs::write(path, body).map_err(|e| HarnessError::io(path, e))
}

enum TaskResult {
    Reused(Vec<ExecutionRecord>),
    Ran(Vec<ExecutionRecord>, Vec<RunFailure>),
}

fn sweep_task(
    task: &TaskInstance,
    pets: &[PetId],
    client: &ChatClient,
    exemplars: Option<&ExemplarSet>,
    settings: &RunSettings,
    sandbox: &Sandbox,
    out_dir: &Path,
) -> Result<TaskResult, HarnessError> {
    let existing: Option<Vec<ExecutionRecord>> =
        pets.iter().map(|&p| read_record(&record_path(out_dir, p, &task.id))).collect();
    if let Some(records) = existing {
        return Ok(TaskResult::Reused(records));
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &pet in pets {
        let path = record_path(out_dir, pet, &task.id);
        match run_pet(task, pet, client, exemplars, settings, sandbox) {
            Ok(record) => {
                write_record(&path, &record)?;
                records.push(record);
            }
            Err(e) => {
                log::warn!("task {} / {pet}: {e}", task.id);
                let _ = std::fs::remove_file(&path);
                failures.push(RunFailure { task_id: task.id.clone(), pet, error: e.to_string() });
            }
        }
    }
    Ok(TaskResult::Ran(records, failures))
}

/// Runs every PET on every task, writing one record file per pair.
///
/// A task is skipped when all of its record files already exist; otherwise
/// all of its PETs are rerun. Per-pair errors are collected, not propagated.
pub fn benchmark(
    tasks: &[TaskInstance],
    pets: &[PetId],
    client: &ChatClient,
    exemplars: Option<&ExemplarSet>,
    settings: &RunSettings,
    sandbox: &Sandbox,
    out_dir: &Path,
    jobs: usize,
) -> Result<BenchmarkReport, HarnessError> {
    let slots: Vec<Mutex<Option<Result<TaskResult, HarnessError>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(task) = tasks.get(i) else { break };
        let result = sweep_task(task, pets, client, exemplars, settings, sandbox, out_dir);
        *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(result);
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1) {
            s.spawn(worker);
        }
    });

    let mut report = BenchmarkReport::default();
    for slot in slots {
        match slot.into_inner().unwrap_or_else(|p| p.into_inner()).expect("every task processed")? {
            TaskResult::Reused(records) => {
                report.reused_tasks += 1;
                report.records.extend(records);
            }
            TaskResult::Ran(records, failures) => {
                report.records.extend(records);
                report.failures.extend(failures);
            }
        }
    }
    Ok(report)
}

/// Loads every record file under `dir/<pet>/`.
pub fn load_records(dir: &Path) -> Result<Vec<ExecutionRecord>, HarnessError> {
    let mut records = Vec::new();
    for pet in PetId::ALL {
        let sub = dir.join(pet.slug());
        let Ok(entries) = std::fs::read_dir(&sub) else { continue };
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "json")) {
            let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
            let record: ExecutionRecord =
                serde_json::from_str(&text).map_err(|e| HarnessError::Json(format!("{}: {e}", path.display())))?;
            records.push(record);
        }
    }
    Ok(records)
}
