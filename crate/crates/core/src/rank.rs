//! Per-query PET scoring and the ranked dataset.
//!
//! A PET's score for a query is `ln(max_tokens) * pass - ln(tokens)`, where
//! `max_tokens` is the largest token count any PET used on that query and
//! `pass` is 1 when every test passed, else 0. Passing PETs therefore score
//! at least zero and failing PETs strictly below zero; among either group
//! the cheaper PET wins.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::harness::{ExecutionRecord, TaskInstance};
use crate::metrics::{self, MetricWeights};
use crate::pets::PetId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("incomplete records: missing {}", format_pairs(.0))]
    IncompleteRecords(Vec<(String, PetId)>),
    #[error("{0}")]
    Io(String),
}

fn format_pairs(pairs: &[(String, PetId)]) -> String {
    pairs.iter().map(|(t, p)| format!("({t}, {p})")).collect::<Vec<_>>().join(", ")
}

/// Score of one PET on one query. Requires `2 <= tokens <= max_tokens`.
pub fn r_score(tokens: u64, max_tokens: u64, passed: bool) -> Result<f64, RankError> {
    if tokens < 2 {
        return Err(RankError::Domain(format!("token count {tokens} is below 2")));
    }
    if max_tokens < tokens {
        return Err(RankError::Domain(format!("max_tokens {max_tokens} is below token count {tokens}")));
    }
    let pass = if passed { 1.0 } else { 0.0 };
    Ok((max_tokens as f64).ln() * pass - (tokens as f64).ln())
}

/// Highest-scoring PET; exact ties go to the earlier PET in declaration order.
pub fn label(scores: &BTreeMap<PetId, f64>) -> Option<PetId> {
    let mut best: Option<(PetId, f64)> = None;
    for (&pet, &score) in scores {
        // BTreeMap iterates in PetId order, so strict `>` keeps the earliest tie.
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((pet, score));
        }
    }
    best.map(|(p, _)| p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PetScore {
    pub total_tokens: u64,
    pub passed: bool,
    pub r_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRecord {
    pub task_id: String,
    pub per_pet: BTreeMap<PetId, PetScore>,
    pub label: PetId,
    pub combined_complexity: f64,
    pub prompt: String,
}

impl RankedRecord {
    /// Binary relevance per PET in pool order: 1 when its code passed all tests.
    pub fn relevance(&self, pool: &[PetId]) -> Vec<f64> {
        pool.iter().map(|p| if self.per_pet.get(p).is_some_and(|s| s.passed) { 1.0 } else { 0.0 }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDataset {
    pub records: Vec<RankedRecord>,
    pub pet_pool: Vec<PetId>,
    pub weights: MetricWeights,
}

impl RankedDataset {
    pub fn get(&self, task_id: &str) -> Option<&RankedRecord> {
        self.records.iter().find(|r| r.task_id == task_id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.task_id.clone()).collect()
    }

    /// Restricts to the given ids, preserving dataset order.
    pub fn subset(&self, ids: &BTreeSet<String>) -> RankedDataset {
        RankedDataset {
            records: self.records.iter().filter(|r| ids.contains(&r.task_id)).cloned().collect(),
            pet_pool: self.pet_pool.clone(),
            weights: self.weights,
        }
    }

    /// JSONL, one record per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), RankError> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(|e| RankError::Io(e.to_string()))?;
            out.push(b'\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| RankError::Io(format!("{}: {e}", path.display())))?;
        f.write_all(&out).map_err(|e| RankError::Io(e.to_string()))
    }

    /// Reads JSONL written by [`RankedDataset::write_jsonl`]. The PET pool is
    /// taken from the records; weights are not stored per line.
    pub fn read_jsonl(path: &Path, weights: MetricWeights) -> Result<RankedDataset, RankError> {
        let text = std::fs::read_to_string(path).map_err(|e| RankError::Io(format!("{}: {e}", path.display())))?;
        let records: Vec<RankedRecord> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| RankError::Io(format!("line {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?;
        let pet_pool = records.first().map(|r| r.per_pet.keys().copied().collect()).unwrap_or_else(|| PetId::ALL.to_vec());
        Ok(RankedDataset { records, pet_pool, weights })
    }
}

/// Scores every task, labels it and attaches the reference solution's
/// combined complexity. Tasks with unparseable reference code or token counts
/// below 2 are dropped with a warning.
pub fn build_ranked_dataset(
    records: &[ExecutionRecord],
    tasks: &[TaskInstance],
    weights: &MetricWeights,
    pool: &[PetId],
) -> Result<RankedDataset, RankError> {
    let mut by_pair: HashMap<(&str, PetId), &ExecutionRecord> = HashMap::new();
    for r in records {
        by_pair.insert((r.task_id.as_str(), r.pet), r);
    }
    let missing: Vec<(String, PetId)> = tasks
        .iter()
        .flat_map(|t| pool.iter().map(move |&p| (t, p)))
        .filter(|(t, p)| !by_pair.contains_key(&(t.id.as_str(), *p)))
        .map(|(t, p)| (t.id.clone(), p))
        .collect();
    if !missing.is_empty() {
        return Err(RankError::IncompleteRecords(missing));
    }

    let mut out = Vec::new();
    'tasks: for task in tasks {
        let runs: Vec<&ExecutionRecord> = pool.iter().map(|&p| by_pair[&(task.id.as_str(), p)]).collect();
        let max_tokens = runs.iter().map(|r| r.total_tokens).max().unwrap_or(0);
        let mut per_pet = BTreeMap::new();
        for r in &runs {
            match r_score(r.total_tokens, max_tokens, r.passed) {
                Ok(score) => {
                    per_pet.insert(r.pet, PetScore { total_tokens: r.total_tokens, passed: r.passed, r_score: score });
                }
                Err(e) => {
                    log::warn!("dropping task {}: {} record is malformed ({e})", task.id, r.pet);
                    continue 'tasks;
                }
            }
        }
        let complexity = match metrics::analyze(&task.reference_solution, weights) {
            Ok(report) => report.combined,
            Err(e) => {
                log::warn!("dropping task {}: reference solution is unanalyzable ({e})", task.id);
                continue;
            }
        };
        let scores: BTreeMap<PetId, f64> = per_pet.iter().map(|(p, s)| (*p, s.r_score)).collect();
        out.push(RankedRecord {
            task_id: task.id.clone(),
            label: label(&scores).expect("pool is nonempty"),
            per_pet,
            combined_complexity: complexity,
            prompt: task.prompt.clone(),
        });
    }
    Ok(RankedDataset { records: out, pet_pool: pool.to_vec(), weights: *weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Usage;

    #[test]
    fn r_score_examples() {
        assert_eq!(r_score(1000, 1000, true).unwrap(), 0.0);
        assert!((r_score(100, 1000, true).unwrap() - 2.302585092994046).abs() < 1e-12);
        assert!((r_score(1000, 1000, false).unwrap() + 6.907755278982137).abs() < 1e-12);
        assert!(matches!(r_score(1, 10, true), Err(RankError::Domain(_))));
        assert!(matches!(r_score(20, 10, true), Err(RankError::Domain(_))));
    }

    fn scores(pairs: &[(PetId, f64)]) -> BTreeMap<PetId, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn label_examples() {
        let mut s: BTreeMap<PetId, f64> = PetId::ALL.iter().map(|&p| (p, -5.0 - p.index() as f64)).collect();
        s.insert(PetId::Persona, 2.30);
        assert_eq!(label(&s), Some(PetId::Persona));

        // All fail: the cheapest failing PET has the largest -ln(tokens).
        let toks = [900u64, 300, 700, 500, 800, 1000, 650, 450, 950];
        let s: BTreeMap<PetId, f64> =
            PetId::ALL.iter().zip(toks).map(|(&p, t)| (p, r_score(t, 1000, false).unwrap())).collect();
        assert_eq!(label(&s), Some(PetId::FewShot));

        let s = scores(&[(PetId::SelfDebug, 1.0), (PetId::FewShot, 1.0), (PetId::ZeroShot, 0.5)]);
        assert_eq!(label(&s), Some(PetId::FewShot));
        assert_eq!(label(&BTreeMap::new()), None);
    }

    fn record(task: &str, pet: PetId, tokens: u64, passed: bool) -> ExecutionRecord {
        ExecutionRecord {
            task_id: task.into(),
            pet,
            transcript: vec![],
            rounds: vec![Usage { prompt_tokens: tokens / 2, completion_tokens: tokens - tokens / 2 }],
            final_code: String::new(),
            total_tokens: tokens,
            passed,
            per_test: vec![],
            exemplar_ids: vec![],
        }
    }

    fn task(id: &str, code: &str) -> TaskInstance {
        TaskInstance {
            id: id.into(),
            prompt: format!("prompt {id}"),
            reference_solution: code.into(),
            tests: vec!["assert True".into()],
            category: None,
        }
    }

    #[test]
    fn builds_dataset_and_drops_bad_tasks() {
        let tasks = vec![task("a", "x = 1"), task("b", "def f(:\n"), task("c", "y = 2")];
        let mut records = Vec::new();
        for t in ["a", "b", "c"] {
            for (i, p) in PetId::ALL.into_iter().enumerate() {
                let tokens = if t == "c" && p == PetId::SelfDebug { 1 } else { 100 + 10 * i as u64 };
                records.push(record(t, p, tokens, p == PetId::ZeroShot || p == PetId::SelfDebug));
            }
        }
        let ds = build_ranked_dataset(&records, &tasks, &MetricWeights::default(), &PetId::ALL).unwrap();
        assert_eq!(ds.records.len(), 1);
        let r = &ds.records[0];
        assert_eq!(r.task_id, "a");
        assert_eq!(r.label, PetId::ZeroShot);
        assert_eq!(r.per_pet.len(), 9);
        let expected = metrics::analyze("x = 1", &MetricWeights::default()).unwrap().combined;
        assert_eq!(r.combined_complexity, expected);
        assert_eq!(r.relevance(&PetId::ALL)[0], 1.0);
        assert_eq!(r.relevance(&PetId::ALL)[1], 0.0);
    }

    #[test]
    fn incomplete_records_listed() {
        let tasks = vec![task("a", "x = 1")];
        let records: Vec<_> = PetId::ALL[..7].iter().map(|&p| record("a", p, 100, true)).collect();
        match build_ranked_dataset(&records, &tasks, &MetricWeights::default(), &PetId::ALL) {
            Err(RankError::IncompleteRecords(m)) => {
                assert_eq!(m, vec![("a".to_string(), PetId::ProgressiveHint), ("a".to_string(), PetId::SelfDebug)])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jsonl_roundtrip() {
        let tasks = vec![task("a", "x = 1"), task("b", "y = x + 1")];
        let records: Vec<_> = ["a", "b"]
            .iter()
            .flat_map(|t| PetId::ALL.iter().enumerate().map(move |(i, &p)| record(t, p, 50 + i as u64, i % 2 == 0)))
            .collect();
        let ds = build_ranked_dataset(&records, &tasks, &MetricWeights::default(), &PetId::ALL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ranked.jsonl");
        ds.write_jsonl(&path).unwrap();
        let back = RankedDataset::read_jsonl(&path, MetricWeights::default()).unwrap();
        assert_eq!(back, ds);
        let line = std::fs::read_to_string(&path).unwrap();
        let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        let keys: BTreeSet<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, BTreeSet::from(["task_id", "per_pet", "label", "combined_complexity", "prompt"]));
    }
}
