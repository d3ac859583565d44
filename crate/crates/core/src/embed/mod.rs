//! Query embeddings, complexity-based triplets and a contrastively trained
//! projection head.

mod projection;
mod provider;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use projection::{
    fit_for_threshold, grid_search_threshold, train_projection, GridCandidate, GridSearch, Projection, ProjectionCheckpoint,
    ProjectionFit, ProjectionGrad, Projector, TrainEpoch, TripletConfig,
};
pub use provider::{embed_dataset, validate, EmbeddingProvider, FixtureProvider, HttpEmbeddingProvider};

use crate::rank::RankedRecord;

/// Base embeddings keyed by task id.
pub type Embeddings = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding provider error: {0}")]
    Provider(String),
    #[error("no fixture embedding for {0:?}")]
    FixtureMiss(String),
    #[error("threshold {threshold} gives a degenerate split ({easy} easy, {hard} hard)")]
    DegenerateSplit { threshold: f64, easy: usize, hard: usize },
    #[error("every candidate threshold gives a degenerate split")]
    AllDegenerate,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite loss at epoch {epoch} with learning rate {learning_rate}")]
    Numerical { epoch: usize, learning_rate: f64 },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
}

/// Easy and hard ids, each in input order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub easy: Vec<String>,
    pub hard: Vec<String>,
}

impl Split {
    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.easy.iter().chain(&self.hard)
    }

    /// Keeps only ids accepted by `keep`.
    pub fn filter(&self, keep: impl Fn(&str) -> bool) -> Split {
        Split {
            easy: self.easy.iter().filter(|id| keep(id)).cloned().collect(),
            hard: self.hard.iter().filter(|id| keep(id)).cloned().collect(),
        }
    }
}

/// Records strictly below `threshold` are easy, the rest hard.
pub fn split_easy_hard(records: &[RankedRecord], threshold: f64) -> Result<Split, EmbedError> {
    let mut split = Split::default();
    for r in records {
        if r.combined_complexity < threshold {
            split.easy.push(r.task_id.clone());
        } else {
            split.hard.push(r.task_id.clone());
        }
    }
    if split.easy.is_empty() || split.hard.is_empty() {
        return Err(EmbedError::DegenerateSplit { threshold, easy: split.easy.len(), hard: split.hard.len() });
    }
    Ok(split)
}

/// One triplet per record as anchor: positive from its own set minus itself,
/// negative from the other set. Anchors alone in their set are skipped.
pub fn sample_triplets(records: &[RankedRecord], threshold: f64, rng: &mut impl Rng) -> Result<Vec<Triplet>, EmbedError> {
    let split = split_easy_hard(records, threshold)?;
    let anchors: Vec<String> = records.iter().map(|r| r.task_id.clone()).collect();
    Ok(sample_triplets_from(&anchors, &split, 1, rng))
}

/// Draws `per_anchor` triplets for each anchor of `split`; an anchor never
/// serves as its own positive.
pub fn sample_triplets_from(anchors: &[String], split: &Split, per_anchor: usize, rng: &mut impl Rng) -> Vec<Triplet> {
    let mut out = Vec::with_capacity(anchors.len() * per_anchor);
    for anchor in anchors {
        let is_easy = split.easy.contains(anchor);
        let (same, other) = if is_easy { (&split.easy, &split.hard) } else { (&split.hard, &split.easy) };
        let candidates: Vec<&String> = same.iter().filter(|id| *id != anchor).collect();
        if candidates.is_empty() || other.is_empty() {
            log::debug!("skipping anchor {anchor}: no valid positive or negative");
            continue;
        }
        for _ in 0..per_anchor {
            let positive = candidates[rng.random_range(0..candidates.len())].clone();
            let negative = other[rng.random_range(0..other.len())].clone();
            out.push(Triplet { anchor: anchor.clone(), positive, negative });
        }
    }
    out
}

/// Like [`sample_triplets_from`] for held-out anchors whose set membership is
/// given by `anchor_split` while positives and negatives come from `pool`.
pub fn sample_heldout_triplets(anchor_split: &Split, pool: &Split, per_anchor: usize, rng: &mut impl Rng) -> Vec<Triplet> {
    let mut out = Vec::new();
    for (anchors, same, other) in [(&anchor_split.easy, &pool.easy, &pool.hard), (&anchor_split.hard, &pool.hard, &pool.easy)] {
        for anchor in anchors {
            let candidates: Vec<&String> = same.iter().filter(|id| *id != anchor).collect();
            if candidates.is_empty() || other.is_empty() {
                log::warn!("skipping held-out anchor {anchor}: no valid positive or negative");
                continue;
            }
            for _ in 0..per_anchor {
                let positive = candidates[rng.random_range(0..candidates.len())].clone();
                let negative = other[rng.random_range(0..other.len())].clone();
                out.push(Triplet { anchor: anchor.clone(), positive, negative });
            }
        }
    }
    out
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `1 - cos(u, v)`, in `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    let (uu, vv) = (dot(u, u), dot(v, v));
    if uu == 0.0 || vv == 0.0 {
        return Err(EmbedError::Domain("cosine distance of a zero vector".into()));
    }
    Ok((1.0 - dot(u, v) / (uu * vv).sqrt()).clamp(0.0, 2.0))
}

/// Distance and its gradients with respect to `u` and `v`.
pub(crate) fn cosine_distance_grad(u: &[f64], v: &[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let (nu, nv) = (dot(u, u).sqrt(), dot(v, v).sqrt());
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    let c = dot(u, v) / (nu * nv);
    let gu = u.iter().zip(v).map(|(a, b)| -(b / (nu * nv) - c * a / (nu * nu))).collect();
    let gv = u.iter().zip(v).map(|(a, b)| -(a / (nu * nv) - c * b / (nv * nv))).collect();
    Some((1.0 - c, gu, gv))
}

/// `max(0, d(a,p) - d(a,n) + margin)` with cosine distance.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> Result<f64, EmbedError> {
    Ok((cosine_distance(a, p)? - cosine_distance(a, n)? + margin).max(0.0))
}

/// Fraction of triplets with the anchor strictly closer to the positive.
/// Pairs involving a zero vector count as failures.
pub fn cosine_accuracy(
    triplets: &[Triplet],
    embeddings: &Embeddings,
    project: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<f64, EmbedError> {
    if triplets.is_empty() {
        return Err(EmbedError::Domain("cosine accuracy of no triplets".into()));
    }
    let mut cache: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut correct = 0usize;
    for t in triplets {
        for id in [&t.anchor, &t.positive, &t.negative] {
            if !cache.contains_key(id.as_str()) {
                let base = embeddings.get(id).ok_or_else(|| EmbedError::FixtureMiss(id.clone()))?;
                cache.insert(id, project(base));
            }
        }
        let (a, p, n) = (&cache[t.anchor.as_str()], &cache[t.positive.as_str()], &cache[t.negative.as_str()]);
        if let (Ok(dp), Ok(dn)) = (cosine_distance(a, p), cosine_distance(a, n)) {
            if dp < dn {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / triplets.len() as f64)
}
