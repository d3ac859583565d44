//! The PET classifier: a three-layer ReLU network with softmax output,
//! trained with cross-entropy and selected by validation nDCG.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embed::{EmbedError, EmbeddingProvider, Projector};
use crate::eval;
use crate::harness::{run_pet, ChatClient, ExecutionRecord, HarnessError, RunSettings, Sandbox, TaskInstance};
use crate::nn::{derive_seed, rng, softmax, Dense, LayerStack};
use crate::pets::{ExemplarSet, PetId};

#[derive(Debug, thiserror::Error)]
pub enum SelectError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite loss at epoch {epoch} with learning rate {learning_rate}")]
    Numerical { epoch: usize, learning_rate: f64 },
    #[error("invalid selector config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Examples per gradient step; 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub hidden: [usize; 2],
    /// Weight each class by inverse frequency in the loss.
    pub class_weighting: bool,
}

impl Default for SelectTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 0.05,
            batch_size: 8,
            seed: 0,
            validation_fraction: 0.1,
            hidden: [64, 32],
            class_weighting: false,
        }
    }
}

impl SelectTrainConfig {
    pub fn validate(&self) -> Result<(), SelectError> {
        if self.epochs == 0 {
            return Err(SelectError::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SelectError::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(SelectError::Config("validation fraction must be in [0, 1)".into()));
        }
        if self.hidden.contains(&0) {
            return Err(SelectError::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// One training example; `label` indexes the model's PET pool.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub label: usize,
}

/// One validation query with per-PET relevance in pool order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedExample {
    pub x: Vec<f64>,
    pub relevance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorModel {
    pub layers: [Dense; 3],
    pub seed: u64,
    pub pet_pool: Vec<PetId>,
}

struct Activations {
    /// Input to each layer, then the logits.
    inputs: [Vec<f64>; 3],
    logits: Vec<f64>,
}

impl SelectorModel {
    /// He-uniform init for the ReLU layers, `±1/sqrt(fan_in)` for the output layer.
    pub fn new(input: usize, hidden: [usize; 2], pet_pool: Vec<PetId>, seed: u64) -> Self {
        let mut r = rng(seed);
        let he = |n: usize| (6.0 / n as f64).sqrt();
        let l1 = Dense::uniform(input, hidden[0], he(input), &mut r);
        let l2 = Dense::uniform(hidden[0], hidden[1], he(hidden[0]), &mut r);
        let l3 = Dense::uniform(hidden[1], pet_pool.len(), 1.0 / (hidden[1] as f64).sqrt(), &mut r);
        Self { layers: [l1, l2, l3], seed, pet_pool }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn dims(&self) -> Vec<usize> {
        LayerStack::from_layers(&self.layers).dims
    }

    fn check(&self, x: &[f64]) -> Result<(), SelectError> {
        if x.len() != self.input_dim() {
            return Err(SelectError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    fn activations(&self, x: &[f64]) -> Activations {
        let relu = |v: Vec<f64>| v.into_iter().map(|z| z.max(0.0)).collect::<Vec<_>>();
        let a1 = relu(self.layers[0].forward(x));
        let a2 = relu(self.layers[1].forward(&a1));
        let logits = self.layers[2].forward(&a2);
        Activations { inputs: [x.to_vec(), a1, a2], logits }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, SelectError> {
        self.check(x)?;
        Ok(self.activations(x).logits)
    }

    /// Probability per PET in pool order.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, SelectError> {
        Ok(softmax(&self.logits(x)?))
    }

    /// PETs by descending probability, ties in PET declaration order.
    pub fn predict_ranking(&self, x: &[f64]) -> Result<Vec<(PetId, f64)>, SelectError> {
        let probs = self.forward(x)?;
        let mut ranked: Vec<(PetId, f64)> = self.pet_pool.iter().copied().zip(probs).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(ranked)
    }

    /// Ranking as indices into the pool.
    pub fn rank_indices(&self, x: &[f64]) -> Result<Vec<usize>, SelectError> {
        Ok(self
            .predict_ranking(x)?
            .into_iter()
            .map(|(p, _)| self.pet_pool.iter().position(|q| *q == p).expect("pool member"))
            .collect())
    }

    /// Mean (optionally class-weighted) cross-entropy and its gradient.
    pub fn loss_and_grad(
        &self,
        batch: &[LabeledExample],
        class_weights: Option<&[f64]>,
    ) -> Result<(f64, [Dense; 3]), SelectError> {
        let mut grads = self.layers.clone().map(|l| Dense::zeros(l.inputs, l.outputs));
        let mut total = 0.0;
        let norm: f64 = batch.iter().map(|e| class_weights.map_or(1.0, |w| w[e.label])).sum();
        for e in batch {
            self.check(&e.x)?;
            let w = class_weights.map_or(1.0, |cw| cw[e.label]) / norm;
            let act = self.activations(&e.x);
            let p = softmax(&act.logits);
            total += -w * p[e.label].max(f64::MIN_POSITIVE).ln();
            let mut g: Vec<f64> = p.iter().enumerate().map(|(k, pk)| w * (pk - if k == e.label { 1.0 } else { 0.0 })).collect();
            for layer in (0..3).rev() {
                let gin = self.layers[layer].backward(&act.inputs[layer], &g, &mut grads[layer]);
                if layer > 0 {
                    g = gin.iter().zip(&act.inputs[layer]).map(|(d, a)| if *a > 0.0 { *d } else { 0.0 }).collect();
                }
            }
        }
        Ok((total, grads))
    }

    pub fn loss(&self, data: &[LabeledExample]) -> Result<f64, SelectError> {
        let mut total = 0.0;
        for e in data {
            total -= self.forward(&e.x)?[e.label].max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / data.len().max(1) as f64)
    }

    /// Fraction of examples whose top-ranked PET is the label.
    pub fn accuracy(&self, data: &[LabeledExample]) -> Result<f64, SelectError> {
        let mut hits = 0usize;
        for e in data {
            if self.rank_indices(&e.x)?[0] == e.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len().max(1) as f64)
    }

    pub fn mean_ndcg(&self, data: &[RankedExample]) -> Result<f64, SelectError> {
        let mut sum = 0.0;
        for e in data {
            sum += eval::ndcg(&self.rank_indices(&e.x)?, &e.relevance).map_err(|err| SelectError::Config(err.to_string()))?;
        }
        Ok(sum / data.len().max(1) as f64)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }

    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for l in &mut self.layers {
            if i < l.param_count() {
                return l.param_mut(i);
            }
            i -= l.param_count();
        }
        panic!("parameter index out of range")
    }

    fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }
}

pub fn flat_grad(grads: &[Dense; 3]) -> Vec<f64> {
    grads.iter().flat_map(|l| l.params().copied()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectEpoch {
    pub epoch: usize,
    /// Training cross-entropy after the epoch's updates.
    pub loss: f64,
    pub accuracy: f64,
    pub validation_ndcg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorFit {
    pub model: SelectorModel,
    pub best_epoch: usize,
    pub initial_loss: f64,
    pub history: Vec<SelectEpoch>,
}

fn class_weights(train: &[LabeledExample], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for e in train {
        counts[e.label] += 1;
    }
    let present = counts.iter().filter(|c| **c > 0).count().max(1);
    counts.iter().map(|&c| if c == 0 { 0.0 } else { train.len() as f64 / (present * c) as f64 }).collect()
}

/// Trains `model` and returns the epoch snapshot with the best validation
/// nDCG (earliest on ties; the last epoch when `validation` is empty).
pub fn train(
    model: SelectorModel,
    train: &[LabeledExample],
    validation: &[RankedExample],
    cfg: &SelectTrainConfig,
) -> Result<SelectorFit, SelectError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(SelectError::Config("no training examples".into()));
    }
    let classes = model.pet_pool.len();
    if let Some(e) = train.iter().find(|e| e.label >= classes) {
        return Err(SelectError::Config(format!("label {} outside a pool of {classes}", e.label)));
    }
    let weights = cfg.class_weighting.then(|| class_weights(train, classes));
    let initial_loss = model.loss(train)?;
    let mut current = model;
    let mut best: Option<(SelectorModel, usize, f64)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng(derive_seed(cfg.seed, "selector-order", epoch as u64)));
        let batch = if cfg.batch_size == 0 { train.len() } else { cfg.batch_size };
        for chunk in order.chunks(batch) {
            let examples: Vec<LabeledExample> = chunk.iter().map(|&i| train[i].clone()).collect();
            let (loss, grads) = current.loss_and_grad(&examples, weights.as_deref())?;
            if !loss.is_finite() {
                return Err(SelectError::Numerical { epoch, learning_rate: cfg.learning_rate });
            }
            for (layer, g) in current.layers.iter_mut().zip(&grads) {
                layer.step(g, cfg.learning_rate);
            }
        }
        let loss = current.loss(train)?;
        if !loss.is_finite() || !current.is_finite() {
            return Err(SelectError::Numerical { epoch, learning_rate: cfg.learning_rate });
        }
        let ndcg = if validation.is_empty() { None } else { Some(current.mean_ndcg(validation)?) };
        history.push(SelectEpoch { epoch, loss, accuracy: current.accuracy(train)?, validation_ndcg: ndcg });
        let score = ndcg.unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|b| score > b.2 || ndcg.is_none()) {
            best = Some((current.clone(), epoch, score));
        }
    }
    let (model, best_epoch, _) = best.expect("at least one epoch");
    Ok(SelectorFit { model, best_epoch, initial_loss, history })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorCheckpoint {
    pub dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub seed: u64,
    pub pet_pool: Vec<PetId>,
}

impl SelectorCheckpoint {
    pub fn new(model: &SelectorModel) -> Self {
        let stack = LayerStack::from_layers(&model.layers);
        Self { dims: stack.dims, weights: stack.weights, biases: stack.biases, seed: model.seed, pet_pool: model.pet_pool.clone() }
    }

    pub fn model(&self) -> Result<SelectorModel, SelectError> {
        let stack = LayerStack { dims: self.dims.clone(), weights: self.weights.clone(), biases: self.biases.clone() };
        let layers: [Dense; 3] = stack
            .into_layers()
            .map_err(SelectError::Io)?
            .try_into()
            .map_err(|v: Vec<Dense>| SelectError::Io(format!("selector checkpoint needs 3 layers, found {}", v.len())))?;
        if layers[2].outputs != self.pet_pool.len() {
            return Err(SelectError::Io(format!(
                "output width {} does not match a pool of {}",
                layers[2].outputs,
                self.pet_pool.len()
            )));
        }
        Ok(SelectorModel { layers, seed: self.seed, pet_pool: self.pet_pool.clone() })
    }

    pub fn save(&self, path: &Path) -> Result<(), SelectError> {
        let body = serde_json::to_string(self).map_err(|e| SelectError::Io(e.to_string()))?;
        std::fs::write(path, body + "\n").map_err(|e| SelectError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, SelectError> {
        let text = std::fs::read_to_string(path).map_err(|e| SelectError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| SelectError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Routed {
    pub ranking: Vec<(PetId, f64)>,
    pub record: ExecutionRecord,
}

/// Ranks PETs for `task` and runs the top one.
#[allow(clippy::too_many_arguments)]
pub fn route(
    model: &SelectorModel,
    projector: &Projector,
    provider: &dyn EmbeddingProvider,
    task: &TaskInstance,
    client: &ChatClient,
    exemplars: Option<&ExemplarSet>,
    settings: &RunSettings,
    sandbox: &Sandbox,
) -> Result<Routed, SelectError> {
    let ranking = rank_query(model, projector, provider, Some(&task.id), &task.prompt)?;
    let record = run_pet(task, ranking[0].0, client, exemplars, settings, sandbox)?;
    Ok(Routed { ranking, record })
}

/// Embeds, projects and ranks one query.
pub fn rank_query(
    model: &SelectorModel,
    projector: &Projector,
    provider: &dyn EmbeddingProvider,
    task_id: Option<&str>,
    text: &str,
) -> Result<Vec<(PetId, f64)>, SelectError> {
    let base = provider.embed_query(task_id, text)?;
    model.predict_ranking(&projector.apply(&base)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn zero_model() -> SelectorModel {
        let mut m = SelectorModel::new(4, [5, 3], PetId::ALL.to_vec(), 0);
        for l in &mut m.layers {
            l.scale(0.0);
        }
        m
    }

    #[test]
    fn zero_parameters_give_uniform() {
        let p = zero_model().forward(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 9.0).abs() < 1e-15));
        let ranking = zero_model().predict_ranking(&[0.0; 4]).unwrap();
        assert_eq!(ranking.iter().map(|r| r.0).collect::<Vec<_>>(), PetId::ALL.to_vec());
    }

    #[test]
    fn forward_is_distribution_and_ranking_is_permutation() {
        let m = SelectorModel::new(6, [8, 4], PetId::ALL.to_vec(), 11);
        let mut r = rng(2);
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| r.random_range(-10.0..10.0)).collect();
            let p = m.forward(&x).unwrap();
            assert!(p.iter().all(|v| *v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let mut pets: Vec<PetId> = m.predict_ranking(&x).unwrap().into_iter().map(|r| r.0).collect();
            assert_eq!(pets.len(), 9);
            pets.sort();
            assert_eq!(pets, PetId::ALL.to_vec());
        }
        assert!(matches!(m.forward(&[0.0]), Err(SelectError::DimensionMismatch { expected: 6, got: 1 })));
    }

    #[test]
    fn unique_max_ranks_first() {
        let mut m = zero_model();
        m.layers[2].biases[PetId::SelfDebug.index()] = 2.0;
        assert_eq!(m.predict_ranking(&[0.0; 4]).unwrap()[0].0, PetId::SelfDebug);
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = SelectTrainConfig { epochs: 0, ..Default::default() };
        let m = SelectorModel::new(2, [3, 3], PetId::ALL.to_vec(), 0);
        let data = vec![LabeledExample { x: vec![1.0, 0.0], label: 0 }];
        assert!(matches!(train(m, &data, &[], &cfg), Err(SelectError::Config(_))));
    }

    #[test]
    fn single_example_loss_decreases() {
        let m = SelectorModel::new(3, [8, 8], PetId::ALL.to_vec(), 4);
        let data = vec![LabeledExample { x: vec![0.5, -1.0, 2.0], label: 3 }];
        let cfg = SelectTrainConfig { epochs: 5, learning_rate: 0.01, ..Default::default() };
        let fit = train(m, &data, &[], &cfg).unwrap();
        let mut prev = fit.initial_loss;
        for h in &fit.history {
            assert!(h.loss < prev, "{:?}", fit.history);
            prev = h.loss;
        }
    }

    #[test]
    fn seeded_training_reproducible() {
        let mut r = rng(0);
        let data: Vec<LabeledExample> = (0..40)
            .map(|i| LabeledExample { x: (0..4).map(|_| r.random_range(-1.0..1.0)).collect(), label: i % 3 })
            .collect();
        let val: Vec<RankedExample> =
            (0..5).map(|i| RankedExample { x: vec![i as f64; 4], relevance: vec![1.0, 0.0, 0.0] }).collect();
        let cfg = SelectTrainConfig { hidden: [6, 5], ..Default::default() };
        let pool = PetId::ALL[..3].to_vec();
        let a = train(SelectorModel::new(4, [6, 5], pool.clone(), 1), &data, &val, &cfg).unwrap();
        let b = train(SelectorModel::new(4, [6, 5], pool, 1), &data, &val, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 10);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = SelectorModel::new(4, [6, 5], PetId::ALL.to_vec(), 9);
        let ck = SelectorCheckpoint::new(&m);
        assert_eq!(ck.dims, vec![4, 6, 5, 9]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        ck.save(&path).unwrap();
        assert_eq!(SelectorCheckpoint::load(&path).unwrap().model().unwrap(), m);
    }
}
