use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    cosine_accuracy, cosine_distance_grad, sample_heldout_triplets, sample_triplets_from, split_easy_hard, EmbedError,
    Embeddings, Split, Triplet,
};
use crate::nn::{derive_seed, holdout, rng, Dense, LayerStack};
use crate::rank::RankedRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripletConfig {
    /// Split point used when no grid search is run.
    pub threshold: f64,
    pub margin: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Triplets per gradient step; 0 means the whole epoch in one step.
    pub batch_size: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Validation triplets drawn per held-out anchor.
    pub validation_per_anchor: usize,
    pub hidden: usize,
    pub output: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_step: f64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            threshold: 35.0,
            margin: 1.0,
            epochs: 15,
            learning_rate: 0.5,
            batch_size: 16,
            seed: 0,
            validation_fraction: 0.1,
            validation_per_anchor: 8,
            hidden: 256,
            output: 128,
            grid_min: 25.0,
            grid_max: 45.0,
            grid_step: 5.0,
        }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::Domain(m.to_string()));
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must be in [0, 1)");
        }
        if self.hidden == 0 || self.output == 0 {
            return bad("projection widths must be positive");
        }
        if !(self.grid_step > 0.0) || self.grid_min > self.grid_max {
            return bad("grid needs step > 0 and min <= max");
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.grid_max - self.grid_min) / self.grid_step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.grid_min + i as f64 * self.grid_step).collect()
    }
}

/// Two-layer map `d -> hidden -> output` with tanh after the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub hidden: Dense,
    pub out: Dense,
    pub seed: u64,
}

/// Parameter gradients, same shapes as the projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGrad {
    pub hidden: Dense,
    pub out: Dense,
}

impl ProjectionGrad {
    pub fn flat(&self) -> Vec<f64> {
        self.hidden.params().chain(self.out.params()).copied().collect()
    }
}

struct Forward {
    h: Vec<f64>,
    y: Vec<f64>,
}

impl Projection {
    /// Uniform init in `±1/sqrt(fan_in)` per layer.
    pub fn new(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let l1 = Dense::uniform(input, hidden, 1.0 / (input as f64).sqrt(), &mut r);
        let l2 = Dense::uniform(hidden, output, 1.0 / (hidden as f64).sqrt(), &mut r);
        Self { hidden: l1, out: l2, seed }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.inputs
    }

    pub fn output_dim(&self) -> usize {
        self.out.outputs
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let h: Vec<f64> = self.hidden.forward(x).into_iter().map(f64::tanh).collect();
        let y = self.out.forward(&h);
        Forward { h, y }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).y
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), EmbedError> {
        if x.len() != self.input_dim() {
            return Err(EmbedError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Mean triplet loss over `triplets` and its gradient.
    pub fn loss_and_grad(
        &self,
        embeddings: &Embeddings,
        triplets: &[Triplet],
        margin: f64,
    ) -> Result<(f64, ProjectionGrad), EmbedError> {
        let mut grad = ProjectionGrad {
            hidden: Dense::zeros(self.hidden.inputs, self.hidden.outputs),
            out: Dense::zeros(self.out.inputs, self.out.outputs),
        };
        if triplets.is_empty() {
            return Ok((0.0, grad));
        }
        let mut cache: BTreeMap<&str, (&[f64], Forward)> = BTreeMap::new();
        for t in triplets {
            for id in [&t.anchor, &t.positive, &t.negative] {
                if !cache.contains_key(id.as_str()) {
                    let x = embeddings.get(id).ok_or_else(|| EmbedError::FixtureMiss(id.clone()))?;
                    self.check_dim(x)?;
                    cache.insert(id, (x.as_slice(), self.forward(x)));
                }
            }
        }
        let scale = 1.0 / triplets.len() as f64;
        let mut dy: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut total = 0.0;
        for t in triplets {
            let ya = &cache[t.anchor.as_str()].1.y;
            let yp = &cache[t.positive.as_str()].1.y;
            let yn = &cache[t.negative.as_str()].1.y;
            let zero = || EmbedError::Domain("projection produced a zero vector".into());
            let (dp, ga_p, gp) = cosine_distance_grad(ya, yp).ok_or_else(zero)?;
            let (dn, ga_n, gn) = cosine_distance_grad(ya, yn).ok_or_else(zero)?;
            let loss = dp - dn + margin;
            if loss <= 0.0 {
                continue;
            }
            total += loss;
            let mut add = |id: &str, g: &[f64], sign: f64| {
                let acc = dy.entry(cache.get_key_value(id).expect("cached").0).or_insert_with(|| vec![0.0; g.len()]);
                acc.iter_mut().zip(g).for_each(|(a, v)| *a += sign * scale * v);
            };
            add(&t.anchor, &ga_p, 1.0);
            add(&t.anchor, &ga_n, -1.0);
            add(&t.positive, &gp, 1.0);
            add(&t.negative, &gn, -1.0);
        }
        for (id, g) in &dy {
            let (x, f) = &cache[id];
            let dh = self.out.backward(&f.h, g, &mut grad.out);
            let dz: Vec<f64> = dh.iter().zip(&f.h).map(|(d, h)| d * (1.0 - h * h)).collect();
            self.hidden.backward(x, &dz, &mut grad.hidden);
        }
        Ok((total * scale, grad))
    }

    pub fn param_count(&self) -> usize {
        self.hidden.param_count() + self.out.param_count()
    }

    /// Parameters in the order used by [`ProjectionGrad::flat`].
    pub fn params(&self) -> Vec<f64> {
        self.hidden.params().chain(self.out.params()).copied().collect()
    }

    pub fn param_mut(&mut self, i: usize) -> &mut f64 {
        let n = self.hidden.param_count();
        if i < n {
            self.hidden.param_mut(i)
        } else {
            self.out.param_mut(i - n)
        }
    }

    fn step(&mut self, grad: &ProjectionGrad, lr: f64) {
        self.hidden.step(&grad.hidden, lr);
        self.out.step(&grad.out, lr);
    }
}

/// Maps base embeddings into the selector's input space.
#[derive(Debug, Clone, PartialEq)]
pub enum Projector {
    Identity,
    Trained(Projection),
}

impl Projector {
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, EmbedError> {
        match self {
            Projector::Identity => Ok(x.to_vec()),
            Projector::Trained(p) => {
                p.check_dim(x)?;
                Ok(p.project(x))
            }
        }
    }

    pub fn output_dim(&self, input: usize) -> usize {
        match self {
            Projector::Identity => input,
            Projector::Trained(p) => p.output_dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCheckpoint {
    pub dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub seed: u64,
    pub threshold: f64,
    pub margin: f64,
}

impl ProjectionCheckpoint {
    pub fn new(projection: &Projection, threshold: f64, margin: f64) -> Self {
        let stack = LayerStack::from_layers(&[projection.hidden.clone(), projection.out.clone()]);
        Self { dims: stack.dims, weights: stack.weights, biases: stack.biases, seed: projection.seed, threshold, margin }
    }

    pub fn projection(&self) -> Result<Projection, EmbedError> {
        let stack = LayerStack { dims: self.dims.clone(), weights: self.weights.clone(), biases: self.biases.clone() };
        let mut layers = stack.into_layers().map_err(EmbedError::Io)?;
        if layers.len() != 2 {
            return Err(EmbedError::Io(format!("projection checkpoint needs 2 layers, found {}", layers.len())));
        }
        let out = layers.pop().expect("two layers");
        let hidden = layers.pop().expect("two layers");
        Ok(Projection { hidden, out, seed: self.seed })
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let body = serde_json::to_string(self).map_err(|e| EmbedError::Io(e.to_string()))?;
        std::fs::write(path, body + "\n").map_err(|e| EmbedError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let text = std::fs::read_to_string(path).map_err(|e| EmbedError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| EmbedError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFit {
    pub projection: Projection,
    pub threshold: f64,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub initial_validation_accuracy: Option<f64>,
    pub validation_accuracy: Option<f64>,
    pub history: Vec<TrainEpoch>,
    /// Every id that influenced training or model selection.
    pub ids_seen: BTreeSet<String>,
}

fn input_dim(embeddings: &Embeddings, ids: impl IntoIterator<Item = impl AsRef<str>>) -> Result<usize, EmbedError> {
    let id = ids.into_iter().next().ok_or_else(|| EmbedError::Domain("no training ids".into()))?;
    embeddings.get(id.as_ref()).map(Vec::len).ok_or_else(|| EmbedError::FixtureMiss(id.as_ref().to_string()))
}

/// Trains a projection on triplets resampled from `train` each epoch and
/// keeps the epoch with the best accuracy on `validation` (earliest on ties;
/// the last epoch when there is no validation set).
pub fn train_projection(
    embeddings: &Embeddings,
    train: &Split,
    validation: &[Triplet],
    threshold: f64,
    cfg: &TripletConfig,
) -> Result<ProjectionFit, EmbedError> {
    cfg.validate()?;
    let d = input_dim(embeddings, train.ids())?;
    let mut current = Projection::new(d, cfg.hidden, cfg.output, derive_seed(cfg.seed, "projection-init", 0));
    let accuracy = |p: &Projection| -> Result<Option<f64>, EmbedError> {
        if validation.is_empty() {
            return Ok(None);
        }
        cosine_accuracy(validation, embeddings, |x| p.project(x)).map(Some)
    };
    let initial = accuracy(&current)?;
    let anchors: Vec<String> = train.ids().cloned().collect();
    let mut best = (current.clone(), 0usize, initial);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut r = rng(derive_seed(cfg.seed, "triplets", epoch as u64));
        let mut triplets = sample_triplets_from(&anchors, train, 1, &mut r);
        if triplets.is_empty() {
            return Err(EmbedError::Domain("no valid training triplets".into()));
        }
        triplets.shuffle(&mut r);
        let batch = if cfg.batch_size == 0 { triplets.len() } else { cfg.batch_size };
        let mut loss_sum = 0.0;
        for chunk in triplets.chunks(batch) {
            let (loss, grad) = current.loss_and_grad(embeddings, chunk, cfg.margin)?;
            if !loss.is_finite() {
                return Err(EmbedError::Numerical { epoch, learning_rate: cfg.learning_rate });
            }
            loss_sum += loss * chunk.len() as f64;
            current.step(&grad, cfg.learning_rate);
        }
        if !(current.hidden.is_finite() && current.out.is_finite()) {
            return Err(EmbedError::Numerical { epoch, learning_rate: cfg.learning_rate });
        }
        let acc = accuracy(&current)?;
        history.push(TrainEpoch { epoch, loss: loss_sum / triplets.len() as f64, validation_accuracy: acc });
        let better = match (acc, best.2) {
            (Some(a), Some(b)) => a > b || best.1 == 0,
            _ => true,
        };
        if better {
            best = (current.clone(), epoch, acc);
        }
    }
    let mut ids_seen: BTreeSet<String> = anchors.into_iter().collect();
    for t in validation {
        ids_seen.extend([t.anchor.clone(), t.positive.clone(), t.negative.clone()]);
    }
    Ok(ProjectionFit {
        projection: best.0,
        threshold,
        best_epoch: best.1,
        initial_validation_accuracy: initial,
        validation_accuracy: best.2,
        history,
        ids_seen,
    })
}

/// Splits `records` at `threshold`, holds out a seeded validation share of
/// anchors and trains. The holdout depends only on `cfg.seed`, so every
/// candidate threshold is judged on the same held-out queries.
pub fn fit_for_threshold(
    embeddings: &Embeddings,
    records: &[RankedRecord],
    threshold: f64,
    cfg: &TripletConfig,
    candidate: u64,
) -> Result<ProjectionFit, EmbedError> {
    let split = split_easy_hard(records, threshold)?;
    let ids: Vec<String> = records.iter().map(|r| r.task_id.clone()).collect();
    let (_, val_ids) = holdout(&ids, cfg.validation_fraction, derive_seed(cfg.seed, "holdout", 0));
    let val: BTreeSet<&str> = val_ids.iter().map(String::as_str).collect();
    let train = split.filter(|id| !val.contains(id));
    let held = split.filter(|id| val.contains(id));
    if train.easy.is_empty() || train.hard.is_empty() || (train.easy.len() < 2 && train.hard.len() < 2) {
        return Err(EmbedError::DegenerateSplit { threshold, easy: train.easy.len(), hard: train.hard.len() });
    }
    let validation = sample_heldout_triplets(
        &held,
        &train,
        cfg.validation_per_anchor,
        &mut rng(derive_seed(cfg.seed, "validation-triplets", candidate)),
    );
    let sub = TripletConfig { seed: derive_seed(cfg.seed, "candidate", candidate), ..cfg.clone() };
    train_projection(embeddings, &train, &validation, threshold, &sub)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCandidate {
    pub threshold: f64,
    /// `None` when the split was degenerate.
    pub validation_accuracy: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct GridSearch {
    pub threshold: f64,
    pub fit: ProjectionFit,
    pub candidates: Vec<GridCandidate>,
}

/// Fits one projection per grid threshold and keeps the one with the highest
/// validation accuracy, preferring the smaller threshold on ties. Candidates
/// train in parallel with seeds derived from their grid index.
pub fn grid_search_threshold(
    embeddings: &Embeddings,
    records: &[RankedRecord],
    cfg: &TripletConfig,
) -> Result<GridSearch, EmbedError> {
    cfg.validate()?;
    let grid = cfg.grid();
    let results: Vec<Result<ProjectionFit, EmbedError>> = std::thread::scope(|s| {
        let handles: Vec<_> = grid
            .iter()
            .enumerate()
            .map(|(i, &t)| s.spawn(move || fit_for_threshold(embeddings, records, t, cfg, i as u64)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("grid worker panicked")).collect()
    });
    let mut candidates = Vec::with_capacity(grid.len());
    let mut best: Option<ProjectionFit> = None;
    for (&threshold, result) in grid.iter().zip(results) {
        match result {
            Ok(fit) => {
                candidates.push(GridCandidate { threshold, validation_accuracy: fit.validation_accuracy, degenerate: false });
                let score = fit.validation_accuracy.unwrap_or(f64::NEG_INFINITY);
                if best.as_ref().is_none_or(|b| score > b.validation_accuracy.unwrap_or(f64::NEG_INFINITY)) {
                    best = Some(fit);
                }
            }
            Err(EmbedError::DegenerateSplit { .. }) => {
                candidates.push(GridCandidate { threshold, validation_accuracy: None, degenerate: true });
            }
            Err(e) => return Err(e),
        }
    }
    let fit = best.ok_or(EmbedError::AllDegenerate)?;
    Ok(GridSearch { threshold: fit.threshold, fit, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::cosine_accuracy;
    use crate::pets::PetId;
    use rand::Rng;

    fn small_cfg() -> TripletConfig {
        TripletConfig { hidden: 6, output: 4, epochs: 3, ..TripletConfig::default() }
    }

    fn toy() -> (Embeddings, Vec<RankedRecord>) {
        let mut r = rng(5);
        let mut emb = Embeddings::new();
        let mut recs = Vec::new();
        for i in 0..24 {
            let hard = i % 2 == 1;
            let mut v: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
            v[0] += if hard { 2.0 } else { -2.0 };
            let id = format!("t{i:02}");
            emb.insert(id.clone(), v);
            recs.push(RankedRecord {
                task_id: id,
                per_pet: BTreeMap::new(),
                label: PetId::ZeroShot,
                combined_complexity: if hard { 40.0 } else { 28.0 },
                prompt: String::new(),
            });
        }
        (emb, recs)
    }

    #[test]
    fn zero_epochs_returns_init() {
        let (emb, recs) = toy();
        let cfg = TripletConfig { epochs: 0, ..small_cfg() };
        let fit = fit_for_threshold(&emb, &recs, 35.0, &cfg, 0).unwrap();
        let init = Projection::new(5, 6, 4, derive_seed(derive_seed(0, "candidate", 0), "projection-init", 0));
        assert_eq!(fit.projection, init);
        assert_eq!(fit.best_epoch, 0);
        assert!(fit.history.is_empty());
    }

    #[test]
    fn satisfied_triplets_give_zero_gradient() {
        let (emb, _) = toy();
        let p = Projection::new(5, 6, 4, 1);
        let t = Triplet { anchor: "t00".into(), positive: "t02".into(), negative: "t01".into() };
        let (loss, grad) = p.loss_and_grad(&emb, &[t], -5.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.flat().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn training_is_reproducible_and_improves() {
        let (emb, recs) = toy();
        let cfg = TripletConfig { epochs: 5, hidden: 16, output: 8, ..TripletConfig::default() };
        let a = fit_for_threshold(&emb, &recs, 35.0, &cfg, 0).unwrap();
        let b = fit_for_threshold(&emb, &recs, 35.0, &cfg, 0).unwrap();
        assert_eq!(a.projection, b.projection);
        assert_eq!(a.history, b.history);
        assert!(a.validation_accuracy.unwrap() >= a.initial_validation_accuracy.unwrap());
        assert!(a.history.last().unwrap().loss < a.history[0].loss);
    }

    #[test]
    fn grid_skips_degenerate_and_breaks_ties_low() {
        let (emb, recs) = toy();
        let cfg = TripletConfig { epochs: 2, ..small_cfg() };
        let g = grid_search_threshold(&emb, &recs, &cfg).unwrap();
        assert_eq!(g.candidates.len(), 5);
        // 25 puts everything in hard; 30, 35 and 40 split identically; 45 is all easy.
        assert!(g.candidates[0].degenerate && g.candidates[4].degenerate);
        let accs: Vec<f64> = g.candidates[1..4].iter().map(|c| c.validation_accuracy.unwrap()).collect();
        let max = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = g.candidates[1..4].iter().find(|c| c.validation_accuracy == Some(max)).unwrap();
        assert_eq!(g.threshold, first.threshold);

        let all_easy = TripletConfig { grid_min: 45.0, grid_max: 50.0, ..cfg };
        assert!(matches!(grid_search_threshold(&emb, &recs, &all_easy), Err(EmbedError::AllDegenerate)));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let p = Projection::new(5, 6, 4, 3);
        let ck = ProjectionCheckpoint::new(&p, 35.0, 1.0);
        assert_eq!(ck.dims, vec![5, 6, 4]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        ck.save(&path).unwrap();
        let back = ProjectionCheckpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.projection().unwrap(), p);
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, BTreeSet::from(["dims", "weights", "biases", "seed", "threshold", "margin"]));
    }

    #[test]
    fn identity_projector() {
        let (emb, _) = toy();
        let t = vec![Triplet { anchor: "t00".into(), positive: "t02".into(), negative: "t01".into() }];
        let id = Projector::Identity;
        assert_eq!(id.apply(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let acc = cosine_accuracy(&t, &emb, |x| id.apply(x).unwrap()).unwrap();
        assert!(acc == 0.0 || acc == 1.0);
        let tr = Projector::Trained(Projection::new(5, 6, 4, 0));
        assert!(matches!(tr.apply(&[1.0]), Err(EmbedError::DimensionMismatch { expected: 5, got: 1 })));
    }
}
