//! Cross-validation, ranking metrics, baselines and the full routing
//! pipeline evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{grid_search_threshold, EmbedError, Embeddings, Projector, TripletConfig};
use crate::harness::Category;
use crate::nn::{derive_seed, holdout, rng};
use crate::pets::PetId;
use crate::rank::{RankedDataset, RankedRecord};
use crate::select::{self, LabeledExample, RankedExample, SelectError, SelectTrainConfig, SelectorModel};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cannot split {items} items into {k} folds")]
    TooFewItems { items: usize, k: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("incomplete records: {}", .0.iter().map(|(t, p)| format!("({t}, {p})")).collect::<Vec<_>>().join(", "))]
    IncompleteRecords(Vec<(String, PetId)>),
    #[error("tasks without a category: {}", .0.join(", "))]
    MissingCategory(Vec<String>),
    #[error("fold {fold}: test ids leaked into {stage}: {}", .ids.join(", "))]
    Leakage { fold: usize, stage: &'static str, ids: Vec<String> },
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: Box<EvalError> },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Select(#[from] SelectError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Seeded shuffle, then `k` contiguous test slices whose sizes differ by at
/// most one. Each fold trains on everything outside its slice.
pub fn kfold(ids: &[String], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k == 0 || ids.len() < k {
        return Err(EvalError::TooFewItems { items: ids.len(), k });
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut rng(seed));
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        let test = order[start..start + len].to_vec();
        let train = order[..start].iter().chain(&order[start + len..]).cloned().collect();
        folds.push(Fold { train, test });
        start += len;
    }
    Ok(FoldPlan { k, seed, folds })
}

impl FoldPlan {
    /// Test slices partition `ids`, sizes differ by at most one, and every
    /// fold's train set is the complement of its test set.
    pub fn check(&self, ids: &[String]) -> Result<(), String> {
        let all: BTreeSet<&String> = ids.iter().collect();
        let mut seen = BTreeSet::new();
        for (i, f) in self.folds.iter().enumerate() {
            for id in &f.test {
                if !seen.insert(id) {
                    return Err(format!("{id} is in more than one test fold"));
                }
            }
            let train: BTreeSet<&String> = f.train.iter().collect();
            let test: BTreeSet<&String> = f.test.iter().collect();
            if !train.is_disjoint(&test) {
                return Err(format!("fold {i} trains on its own test ids"));
            }
            if train.len() + test.len() != all.len() || train.union(&test).any(|id| !all.contains(id)) {
                return Err(format!("fold {i} does not cover the dataset"));
            }
        }
        if seen != all {
            return Err("test folds do not cover the dataset".into());
        }
        let sizes: Vec<usize> = self.folds.iter().map(|f| f.test.len()).collect();
        if sizes.iter().max().unwrap_or(&0) - sizes.iter().min().unwrap_or(&0) > 1 {
            return Err(format!("unbalanced fold sizes {sizes:?}"));
        }
        Ok(())
    }
}

/// Percentage of passing tasks.
pub fn pass_at_1(passed: &[bool]) -> Result<f64, EvalError> {
    if passed.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(100.0 * passed.iter().filter(|p| **p).count() as f64 / passed.len() as f64)
}

fn check_permutation(ranking: &[usize], n: usize) -> Result<(), EvalError> {
    let mut seen = vec![false; n];
    if ranking.len() != n {
        return Err(EvalError::LengthMismatch(format!("ranking of {} items, relevance of {n}", ranking.len())));
    }
    for &i in ranking {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(EvalError::LengthMismatch(format!("ranking is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

/// `1 / rank` of the first relevant item, or 0 when none is relevant.
pub fn reciprocal_rank(ranking: &[usize], relevance: &[f64]) -> Result<f64, EvalError> {
    check_permutation(ranking, relevance.len())?;
    Ok(ranking.iter().position(|&i| relevance[i] > 0.0).map_or(0.0, |pos| 1.0 / (pos + 1) as f64))
}

/// Mean reciprocal rank over queries.
pub fn mrr(rankings: &[Vec<usize>], relevance: &[Vec<f64>]) -> Result<f64, EvalError> {
    if rankings.len() != relevance.len() {
        return Err(EvalError::LengthMismatch(format!("{} rankings, {} relevance vectors", rankings.len(), relevance.len())));
    }
    if rankings.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut sum = 0.0;
    for (r, rel) in rankings.iter().zip(relevance) {
        sum += reciprocal_rank(r, rel)?;
    }
    Ok(sum / rankings.len() as f64)
}

fn dcg(gains: impl Iterator<Item = f64>) -> f64 {
    gains.enumerate().map(|(i, g)| g / ((i + 2) as f64).log2()).sum()
}

/// Normalized discounted cumulative gain; 1 when nothing is relevant.
pub fn ndcg(ranking: &[usize], relevance: &[f64]) -> Result<f64, EvalError> {
    check_permutation(ranking, relevance.len())?;
    let mut ideal = relevance.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(ideal.into_iter());
    if idcg == 0.0 {
        return Ok(1.0);
    }
    Ok(dcg(ranking.iter().map(|&i| relevance[i])) / idcg)
}

/// What a method did on one test task.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pet: PetId,
    pub passed: bool,
    pub tokens: u64,
    /// Full ranking over the pool, for methods that produce one.
    pub ranking: Option<Vec<usize>>,
    pub relevance: Vec<f64>,
}

fn outcome(record: &RankedRecord, pet: PetId, pool: &[PetId]) -> Result<Outcome, EvalError> {
    let s = record.per_pet.get(&pet).ok_or_else(|| EvalError::IncompleteRecords(vec![(record.task_id.clone(), pet)]))?;
    Ok(Outcome { pet, passed: s.passed, tokens: s.total_tokens, ranking: None, relevance: record.relevance(pool) })
}

fn check_complete(records: &[RankedRecord], pool: &[PetId]) -> Result<(), EvalError> {
    let missing: Vec<(String, PetId)> = records
        .iter()
        .flat_map(|r| pool.iter().filter(|p| !r.per_pet.contains_key(p)).map(|p| (r.task_id.clone(), *p)))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(EvalError::IncompleteRecords(missing))
    }
}

/// Always the same PET.
pub fn single_pet(records: &[RankedRecord], pet: PetId, pool: &[PetId]) -> Result<Vec<Outcome>, EvalError> {
    records.iter().map(|r| outcome(r, pet, pool)).collect()
}

/// A uniformly random PET per task.
pub fn random_baseline(records: &[RankedRecord], pool: &[PetId], rng: &mut impl Rng) -> Result<Vec<Outcome>, EvalError> {
    check_complete(records, pool)?;
    records.iter().map(|r| outcome(r, pool[rng.random_range(0..pool.len())], pool)).collect()
}

/// Samples each test task's PET from the distribution of winning PETs among
/// training tasks of the same category. Training tasks where no PET passed
/// carry no signal about the best PET and are left out of the estimate.
/// Categories without usable training tasks fall back to uniform.
pub fn category_baseline(
    train: &[RankedRecord],
    test: &[RankedRecord],
    categories: &BTreeMap<String, Category>,
    pool: &[PetId],
    rng: &mut impl Rng,
) -> Result<Vec<Outcome>, EvalError> {
    let missing: Vec<String> =
        train.iter().chain(test).filter(|r| !categories.contains_key(&r.task_id)).map(|r| r.task_id.clone()).collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingCategory(missing));
    }
    check_complete(test, pool)?;
    let mut counts: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
    for r in train.iter().filter(|r| r.per_pet.values().any(|s| s.passed)) {
        if let Some(i) = pool.iter().position(|p| *p == r.label) {
            counts.entry(categories[&r.task_id]).or_insert_with(|| vec![0.0; pool.len()])[i] += 1.0;
        }
    }
    let mut out = Vec::with_capacity(test.len());
    for r in test {
        let cat = categories[&r.task_id];
        let pick = match counts.get(&cat) {
            Some(w) => WeightedIndex::new(w).expect("counts are positive").sample(rng),
            None => {
                log::warn!("category {cat} has no training signal; using a uniform choice for {}", r.task_id);
                rng.random_range(0..pool.len())
            }
        };
        out.push(outcome(r, pool[pick], pool)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub pass_at_1: f64,
    pub mean_tokens: f64,
    pub mrr: Option<f64>,
    pub ndcg: Option<f64>,
}

impl MethodRow {
    pub fn from_outcomes(method: impl Into<String>, outcomes: &[Outcome]) -> Result<Self, EvalError> {
        let passed: Vec<bool> = outcomes.iter().map(|o| o.passed).collect();
        let tokens = outcomes.iter().map(|o| o.tokens as f64).sum::<f64>() / outcomes.len().max(1) as f64;
        let rankings: Option<Vec<Vec<usize>>> = outcomes.iter().map(|o| o.ranking.clone()).collect();
        let (mrr_v, ndcg_v) = match rankings {
            Some(rs) if !rs.is_empty() => {
                let rels: Vec<Vec<f64>> = outcomes.iter().map(|o| o.relevance.clone()).collect();
                let mut n = 0.0;
                for (r, rel) in rs.iter().zip(&rels) {
                    n += ndcg(r, rel)?;
                }
                (Some(mrr(&rs, &rels)?), Some(n / rs.len() as f64))
            }
            _ => (None, None),
        };
        Ok(Self { method: method.into(), pass_at_1: pass_at_1(&passed)?, mean_tokens: tokens, mrr: mrr_v, ndcg: ndcg_v })
    }

    fn mean(rows: &[&MethodRow]) -> MethodRow {
        let n = rows.len() as f64;
        let avg = |f: &dyn Fn(&MethodRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        let avg_opt = |f: &dyn Fn(&MethodRow) -> Option<f64>| -> Option<f64> {
            rows.iter().map(|r| f(r)).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
        };
        MethodRow {
            method: rows[0].method.clone(),
            pass_at_1: avg(&|r| r.pass_at_1),
            mean_tokens: avg(&|r| r.mean_tokens),
            mrr: avg_opt(&|r| r.mrr),
            ndcg: avg_opt(&|r| r.ndcg),
        }
    }
}

pub const RANDOM_ROW: &str = "Random";
pub const CATEGORY_ROW: &str = "Category";
pub const NO_CL_ROW: &str = "Router without contrastive step";
pub const ROUTER_ROW: &str = "Router";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub test_size: usize,
    pub threshold: f64,
    pub rows: Vec<MethodRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub k: usize,
    pub seed: u64,
    /// Averages of the per-fold rows.
    pub rows: Vec<MethodRow>,
    pub folds: Vec<FoldSummary>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl EvalReport {
    pub fn from_folds(label: impl Into<String>, k: usize, seed: u64, folds: Vec<FoldSummary>) -> Self {
        let rows = match folds.first() {
            None => Vec::new(),
            Some(first) => (0..first.rows.len())
                .map(|i| MethodRow::mean(&folds.iter().map(|f| &f.rows[i]).collect::<Vec<_>>()))
                .collect(),
        };
        Self { label: label.into(), k, seed, rows, folds }
    }

    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "### {} ({}-fold, seed {})\n", self.label, self.k, self.seed);
        let _ = writeln!(s, "| Method | Acc | #Token | MRR | nDCG |");
        let _ = writeln!(s, "|---|---:|---:|---:|---:|");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {:.1} | {:.1} | {} | {} |",
                r.method,
                r.pass_at_1,
                r.mean_tokens,
                fmt_opt(r.mrr),
                fmt_opt(r.ndcg)
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub label: String,
    pub triplet: TripletConfig,
    pub select: SelectTrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { label: "evaluation".into(), triplet: TripletConfig::default(), select: SelectTrainConfig::default() }
    }
}

/// Ids each trained artifact of one fold was exposed to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldAudit {
    pub fold: usize,
    pub test: BTreeSet<String>,
    pub triplet_ids: BTreeSet<String>,
    pub selector_ids: BTreeSet<String>,
    pub exemplar_ids: BTreeSet<String>,
}

impl FoldAudit {
    fn check(&self) -> Result<(), EvalError> {
        for (stage, ids) in
            [("triplet sampling", &self.triplet_ids), ("selector training", &self.selector_ids), ("exemplars", &self.exemplar_ids)]
        {
            let leaked: Vec<String> = ids.intersection(&self.test).cloned().collect();
            if !leaked.is_empty() {
                return Err(EvalError::Leakage { fold: self.fold, stage, ids: leaked });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: EvalReport,
    pub audits: Vec<FoldAudit>,
}

struct SelectorData {
    train: Vec<LabeledExample>,
    validation: Vec<RankedExample>,
    ids: BTreeSet<String>,
}

fn selector_data(
    records: &[RankedRecord],
    embeddings: &Embeddings,
    projector: &Projector,
    pool: &[PetId],
    cfg: &SelectTrainConfig,
) -> Result<SelectorData, EvalError> {
    let ids: Vec<String> = records.iter().map(|r| r.task_id.clone()).collect();
    let (_, val_ids) = holdout(&ids, cfg.validation_fraction, derive_seed(cfg.seed, "selector-holdout", 0));
    let val_ids: BTreeSet<String> = val_ids.into_iter().collect();
    let mut data = SelectorData { train: Vec::new(), validation: Vec::new(), ids: BTreeSet::new() };
    for r in records {
        let base = embeddings.get(&r.task_id).ok_or_else(|| EmbedError::FixtureMiss(r.task_id.clone()))?;
        let x = projector.apply(base)?;
        data.ids.insert(r.task_id.clone());
        if val_ids.contains(&r.task_id) {
            data.validation.push(RankedExample { x, relevance: r.relevance(pool) });
        } else {
            let label = pool.iter().position(|p| *p == r.label).expect("label is in the pool");
            data.train.push(LabeledExample { x, label });
        }
    }
    Ok(data)
}

fn routed_outcomes(
    model: &SelectorModel,
    projector: &Projector,
    test: &[RankedRecord],
    embeddings: &Embeddings,
    pool: &[PetId],
) -> Result<Vec<Outcome>, EvalError> {
    let mut out = Vec::with_capacity(test.len());
    for r in test {
        let base = embeddings.get(&r.task_id).ok_or_else(|| EmbedError::FixtureMiss(r.task_id.clone()))?;
        let ranking = model.rank_indices(&projector.apply(base)?)?;
        let mut o = outcome(r, pool[ranking[0]], pool)?;
        o.ranking = Some(ranking);
        out.push(o);
    }
    Ok(out)
}

fn train_router(
    train: &[RankedRecord],
    embeddings: &Embeddings,
    projector: &Projector,
    pool: &[PetId],
    cfg: &SelectTrainConfig,
    input: usize,
) -> Result<(SelectorModel, BTreeSet<String>), EvalError> {
    let data = selector_data(train, embeddings, projector, pool, cfg)?;
    let model = SelectorModel::new(projector.output_dim(input), cfg.hidden, pool.to_vec(), derive_seed(cfg.seed, "selector-init", 0));
    let fit = select::train(model, &data.train, &data.validation, cfg)?;
    Ok((fit.model, data.ids))
}

/// Runs every method on every fold and averages the per-fold rows.
///
/// Rows: each single PET in pool order, Random, Category, the router on
/// untrained (identity) embeddings, and the full router. All trained pieces
/// see only the fold's training records; `exemplar_ids` are the ids shown as
/// few-shot examples during the sweep. Any overlap with a test fold aborts
/// the evaluation. Sub-config seeds are derived from `seed` per fold.
pub fn evaluate_pipeline(
    ranked: &RankedDataset,
    embeddings: &Embeddings,
    categories: &BTreeMap<String, Category>,
    plan: &FoldPlan,
    cfg: &PipelineConfig,
    exemplar_ids: &BTreeSet<String>,
) -> Result<PipelineOutput, EvalError> {
    let pool = &ranked.pet_pool;
    let ids = ranked.ids();
    plan.check(&ids).map_err(EvalError::LengthMismatch)?;
    let input = crate::embed::validate(embeddings)?.ok_or(EvalError::EmptyInput)?;
    let mut summaries = Vec::with_capacity(plan.folds.len());
    let mut audits = Vec::with_capacity(plan.folds.len());
    for (i, fold) in plan.folds.iter().enumerate() {
        let wrap = |e: EvalError| EvalError::Fold { fold: i, source: Box::new(e) };
        let fi = i as u64;
        let train = ranked.subset(&fold.train.iter().cloned().collect()).records;
        let test = ranked.subset(&fold.test.iter().cloned().collect()).records;
        let test_ids: BTreeSet<String> = fold.test.iter().cloned().collect();

        let mut rows = Vec::with_capacity(pool.len() + 4);
        for &pet in pool {
            rows.push(MethodRow::from_outcomes(pet.display_name(), &single_pet(&test, pet, pool).map_err(wrap)?).map_err(wrap)?);
        }
        let mut r = rng(derive_seed(plan.seed, "random-baseline", fi));
        rows.push(MethodRow::from_outcomes(RANDOM_ROW, &random_baseline(&test, pool, &mut r).map_err(wrap)?).map_err(wrap)?);
        let mut r = rng(derive_seed(plan.seed, "category-baseline", fi));
        let cat = category_baseline(&train, &test, categories, pool, &mut r).map_err(wrap)?;
        rows.push(MethodRow::from_outcomes(CATEGORY_ROW, &cat).map_err(wrap)?);

        let select_cfg = SelectTrainConfig { seed: derive_seed(plan.seed, "fold-select", fi), ..cfg.select.clone() };
        let (plain, plain_ids) =
            train_router(&train, embeddings, &Projector::Identity, pool, &select_cfg, input).map_err(wrap)?;
        let plain_out = routed_outcomes(&plain, &Projector::Identity, &test, embeddings, pool).map_err(wrap)?;
        rows.push(MethodRow::from_outcomes(NO_CL_ROW, &plain_out).map_err(wrap)?);

        let triplet_cfg = TripletConfig { seed: derive_seed(plan.seed, "fold-triplet", fi), ..cfg.triplet.clone() };
        let grid = grid_search_threshold(embeddings, &train, &triplet_cfg).map_err(|e| wrap(e.into()))?;
        let projector = Projector::Trained(grid.fit.projection.clone());
        let (router, router_ids) = train_router(&train, embeddings, &projector, pool, &select_cfg, input).map_err(wrap)?;
        let routed = routed_outcomes(&router, &projector, &test, embeddings, pool).map_err(wrap)?;
        rows.push(MethodRow::from_outcomes(ROUTER_ROW, &routed).map_err(wrap)?);

        let audit = FoldAudit {
            fold: i,
            test: test_ids,
            triplet_ids: grid.fit.ids_seen.clone(),
            selector_ids: plain_ids.union(&router_ids).cloned().collect(),
            exemplar_ids: exemplar_ids.clone(),
        };
        audit.check()?;
        audits.push(audit);
        summaries.push(FoldSummary { fold: i, test_size: test.len(), threshold: grid.threshold, rows });
    }
    Ok(PipelineOutput { report: EvalReport::from_folds(cfg.label.clone(), plan.k, plan.seed, summaries), audits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank::PetScore;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn kfold_examples() {
        let plan = kfold(&ids(10), 5, 1).unwrap();
        assert!(plan.folds.iter().all(|f| f.test.len() == 2 && f.train.len() == 8));
        plan.check(&ids(10)).unwrap();
        assert_eq!(plan, kfold(&ids(10), 5, 1).unwrap());
        let plan = kfold(&ids(12), 5, 1).unwrap();
        assert_eq!(plan.folds.iter().map(|f| f.test.len()).collect::<Vec<_>>(), vec![3, 3, 2, 2, 2]);
        assert!(matches!(kfold(&ids(3), 5, 0), Err(EvalError::TooFewItems { items: 3, k: 5 })));
    }

    #[test]
    fn pass_at_1_examples() {
        assert_eq!(pass_at_1(&[true; 3]).unwrap(), 100.0);
        assert_eq!(pass_at_1(&[true, false, false, false]).unwrap(), 25.0);
        assert!(matches!(pass_at_1(&[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn ranking_metric_examples() {
        assert_eq!(reciprocal_rank(&[0, 1, 2], &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(reciprocal_rank(&[0, 1, 2], &[0.0, 1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(reciprocal_rank(&[0, 1, 2], &[0.0; 3]).unwrap(), 0.0);
        let v = ndcg(&[0, 1, 2], &[1.0, 0.0, 1.0]).unwrap();
        assert!((v - 1.5 / (1.0 + 1.0 / 3f64.log2())).abs() < 1e-12);
        assert!((v - 0.9197).abs() < 5e-5);
        assert_eq!(ndcg(&[2, 0, 1], &[1.0, 0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(ndcg(&[0, 1, 2], &[0.0; 3]).unwrap(), 1.0);
        assert!(matches!(ndcg(&[0, 0, 1], &[1.0, 0.0, 0.0]), Err(EvalError::LengthMismatch(_))));
        assert!(matches!(mrr(&[vec![0]], &[]), Err(EvalError::LengthMismatch(_))));
    }

    fn rec(id: &str, label: PetId, passing: &[PetId]) -> RankedRecord {
        let per_pet = PetId::ALL
            .iter()
            .map(|&p| (p, PetScore { total_tokens: 100 + p.index() as u64, passed: passing.contains(&p), r_score: 0.0 }))
            .collect();
        RankedRecord { task_id: id.into(), per_pet, label, combined_complexity: 30.0, prompt: String::new() }
    }

    #[test]
    fn random_baseline_single_pet_pool() {
        let recs = vec![rec("a", PetId::Persona, &[PetId::Persona]), rec("b", PetId::ZeroShot, &[])];
        let pool = [PetId::Persona];
        let out = random_baseline(&recs, &pool, &mut rng(0)).unwrap();
        let single = single_pet(&recs, PetId::Persona, &pool).unwrap();
        assert_eq!(out, single);
    }

    #[test]
    fn category_baseline_follows_training_labels() {
        let cats: BTreeMap<String, Category> = [
            ("a", Category::StringManipulation),
            ("b", Category::StringManipulation),
            ("c", Category::MathematicalComputation),
            ("d", Category::MathematicalComputation),
            ("e", Category::StringManipulation),
            ("f", Category::MathematicalComputation),
            ("g", Category::ListProcessing),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let train = vec![
            rec("a", PetId::ZeroShot, &[PetId::ZeroShot]),
            rec("b", PetId::ZeroShot, &[PetId::ZeroShot]),
            rec("c", PetId::SelfDebug, &[PetId::SelfDebug]),
            rec("d", PetId::SelfDebug, &[PetId::SelfDebug]),
        ];
        let test = vec![rec("e", PetId::ZeroShot, &[]), rec("f", PetId::ZeroShot, &[]), rec("g", PetId::ZeroShot, &[])];
        for seed in 0..20 {
            let out = category_baseline(&train, &test, &cats, &PetId::ALL, &mut rng(seed)).unwrap();
            assert_eq!(out[0].pet, PetId::ZeroShot);
            assert_eq!(out[1].pet, PetId::SelfDebug);
        }
        let mut partial = cats.clone();
        partial.remove("e");
        assert!(matches!(
            category_baseline(&train, &test, &partial, &PetId::ALL, &mut rng(0)),
            Err(EvalError::MissingCategory(ids)) if ids == vec!["e".to_string()]
        ));
    }

    #[test]
    fn report_averages_folds_and_renders() {
        let row = |m: &str, acc: f64, ndcg: Option<f64>| MethodRow {
            method: m.into(),
            pass_at_1: acc,
            mean_tokens: acc * 2.0,
            mrr: ndcg,
            ndcg,
        };
        let folds = vec![
            FoldSummary { fold: 0, test_size: 2, threshold: 30.0, rows: vec![row("A", 50.0, None), row("B", 100.0, Some(1.0))] },
            FoldSummary { fold: 1, test_size: 2, threshold: 35.0, rows: vec![row("A", 100.0, None), row("B", 50.0, Some(0.5))] },
        ];
        let rep = EvalReport::from_folds("toy", 2, 7, folds);
        assert_eq!(rep.row("A").unwrap().pass_at_1, 75.0);
        assert_eq!(rep.row("B").unwrap().ndcg, Some(0.75));
        let md = rep.to_markdown();
        assert!(md.contains("| A | 75.0 | 150.0 | - | - |"), "{md}");
        let back: EvalReport = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
    }
}
