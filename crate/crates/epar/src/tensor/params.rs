//! Named trainable parameters, addressable for checkpointing, optimizer
//! updates, and gradient checks.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Tensor, TensorError};

/// All trainable weights of a model, keyed by dotted names such as
/// `enc.lstm_fwd.wi`. Iteration order is the sorted name order, which keeps
/// every consumer deterministic.
#[derive(Debug, Clone, Default)]
pub struct ModelParams {
    entries: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, mut t: Tensor) {
        t.requires_grad = true;
        self.entries.insert(name.to_string(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn total_values(&self) -> usize {
        self.entries.values().map(|t| t.numel()).sum()
    }

    /// Reset every parameter's gradient to an explicit zero buffer.
    pub fn zero_grads(&mut self) {
        for t in self.entries.values_mut() {
            t.grad = Some(vec![0.0; t.numel()]);
        }
    }

    pub fn clear_grads(&mut self) {
        for t in self.entries.values_mut() {
            t.grad = None;
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, g: &[f64], scale: f64) {
        if let Some(t) = self.entries.get_mut(name) {
            let buf = t.grad.get_or_insert_with(|| vec![0.0; g.len()]);
            for (b, &v) in buf.iter_mut().zip(g) {
                *b += scale * v;
            }
        }
    }

    pub fn grad_global_norm(&self) -> f64 {
        let ss: f64 = self
            .entries
            .values()
            .filter_map(|t| t.grad.as_ref())
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum();
        ss.sqrt()
    }

    /// Rescale all gradients so the global norm is at most `max_norm`.
    pub fn clip_grad_global_norm(&mut self, max_norm: f64) {
        let norm = self.grad_global_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for t in self.entries.values_mut() {
                if let Some(g) = t.grad.as_mut() {
                    g.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
    }

    pub fn scale_grads(&mut self, s: f64) {
        for t in self.entries.values_mut() {
            if let Some(g) = t.grad.as_mut() {
                g.iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    /// Pin the given rows of a `[V x d]` parameter back to zero (used for
    /// PAD embedding rows after optimizer steps).
    pub fn zero_rows(&mut self, name: &str, rows: &[usize]) -> Result<(), TensorError> {
        let t = self
            .entries
            .get_mut(name)
            .ok_or_else(|| TensorError::Contract(format!("unknown parameter {name}")))?;
        let d = t.cols();
        for &r in rows {
            t.data[r * d..(r + 1) * d].fill(0.0);
        }
        Ok(())
    }

    // Registration helpers. All draws come from the caller's RNG in call
    // order, so a fixed seed gives a fixed initialization.

    pub fn add_xavier(&mut self, rng: &mut ChaCha8Rng, name: &str, rows: usize, cols: usize) {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(name, Tensor { shape: vec![rows, cols], data, requires_grad: true, grad: None });
    }

    pub fn add_xavier_vec(&mut self, rng: &mut ChaCha8Rng, name: &str, dim: usize) {
        let bound = (6.0 / (dim + 1) as f64).sqrt();
        let data = (0..dim).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(name, Tensor { shape: vec![dim], data, requires_grad: true, grad: None });
    }

    pub fn add_normal(&mut self, rng: &mut ChaCha8Rng, name: &str, shape: Vec<usize>, sigma: f64) {
        let numel: usize = shape.iter().product();
        // Box-Muller on the seeded stream keeps initialization reproducible
        // without a distribution dependency.
        let data = (0..numel).map(|_| gauss(rng) * sigma).collect();
        self.insert(name, Tensor { shape, data, requires_grad: true, grad: None });
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) {
        self.insert(name, Tensor::zeros(shape));
    }
}

pub(crate) fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
