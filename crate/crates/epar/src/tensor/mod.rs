//! Dense-tensor numerical core with reverse-mode automatic differentiation.
//!
//! Everything neural in this crate is expressed as operations recorded on a
//! [`Tape`]. Values are 64-bit throughout; checkpoints are serialized as
//! little-endian 32-bit floats.

mod adam;
mod cells;
mod checkpoint;
mod ops;
mod params;
mod tape;

#[cfg(test)]
mod tests;

pub use adam::{adam_step, AdamState};
pub use cells::{gru_cell, lstm_cell, GruParams, LstmParams};
pub use checkpoint::{load_checkpoint, manifest_path, save_checkpoint, CheckpointError};
pub use params::ModelParams;
pub(crate) use params::gauss;
pub use tape::{OpSpec, Tape, VarId};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("contract violation: {0}")]
    Contract(String),
}

/// A dense row-major real tensor. `grad` is populated by
/// [`Tape::backward`] for every tensor that participates with
/// `requires_grad` set.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "tensor",
                detail: format!("shape {:?} implies {} values, got {}", shape, numel, data.len()),
            });
        }
        Ok(Tensor { shape, data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel], requires_grad: false, grad: None }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor { shape: vec![], data: vec![x], requires_grad: false, grad: None }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data, requires_grad: false, grad: None }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Matrix row count for rank-2 tensors.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
