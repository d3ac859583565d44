//! Dense layers with explicit forward and backward passes, plus seeding helpers
//! shared by the projection and selector trainers.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Deterministic child seed for a named purpose and index.
pub fn derive_seed(master: u64, purpose: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(purpose.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Splits `ids` into (train, holdout) with a seeded shuffle. The holdout gets
/// `ceil(n * fraction)` ids, but never all of them and at least one when
/// `n >= 2` and `fraction > 0`.
pub fn holdout(ids: &[String], fraction: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut sorted: Vec<String> = ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    sorted.shuffle(&mut rng(seed));
    let n = sorted.len();
    let k = if n < 2 || fraction <= 0.0 { 0 } else { ((n as f64 * fraction).ceil() as usize).clamp(1, n - 1) };
    let val = sorted.split_off(n - k);
    sorted.sort();
    let mut val = val;
    val.sort();
    (sorted, val)
}

/// Fully connected layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    /// Weights and biases uniform in `[-bound, bound]`.
    pub fn uniform(inputs: usize, outputs: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let mut sample = |n: usize| (0..n).map(|_| rng.random_range(-bound..=bound)).collect::<Vec<_>>();
        let weights = sample(inputs * outputs);
        let biases = sample(outputs);
        Self { inputs, outputs, weights, biases }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Accumulates parameter gradients for one example into `grad` and returns
    /// the gradient with respect to the input.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.inputs];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.biases[o] += g;
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += g * x[i];
                grad_in[i] += g * row[i];
            }
        }
        grad_in
    }

    /// `self -= lr * grad`.
    pub fn step(&mut self, grad: &Dense, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w -= lr * g;
        }
        for (b, g) in self.biases.iter_mut().zip(&grad.biases) {
            *b -= lr * g;
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.weights.iter_mut().chain(self.biases.iter_mut()).for_each(|v| *v *= c);
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases)
    }

    pub fn param_mut(&mut self, i: usize) -> &mut f64 {
        let nw = self.weights.len();
        if i < nw {
            &mut self.weights[i]
        } else {
            &mut self.biases[i - nw]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }
}

/// Serialized form of a layer stack: `dims[i] -> dims[i+1]` per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    pub dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl LayerStack {
    pub fn from_layers(layers: &[Dense]) -> Self {
        let mut dims = vec![layers.first().map_or(0, |l| l.inputs)];
        dims.extend(layers.iter().map(|l| l.outputs));
        Self {
            dims,
            weights: layers.iter().map(|l| l.weights.clone()).collect(),
            biases: layers.iter().map(|l| l.biases.clone()).collect(),
        }
    }

    pub fn into_layers(self) -> Result<Vec<Dense>, String> {
        let n = self.dims.len().saturating_sub(1);
        if n == 0 || self.weights.len() != n || self.biases.len() != n {
            return Err(format!("{} dims but {} weight and {} bias arrays", self.dims.len(), self.weights.len(), self.biases.len()));
        }
        let mut layers = Vec::with_capacity(n);
        for (i, (w, b)) in self.weights.into_iter().zip(self.biases).enumerate() {
            let (inputs, outputs) = (self.dims[i], self.dims[i + 1]);
            if w.len() != inputs * outputs || b.len() != outputs {
                return Err(format!("layer {i}: expected {outputs}x{inputs} weights and {outputs} biases"));
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(format!("layer {i} has non-finite parameters"));
            }
            layers.push(Dense { inputs, outputs, weights: w, biases: b });
        }
        Ok(layers)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
