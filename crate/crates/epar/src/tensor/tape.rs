//! Gradient tape: records operations in topological order and replays them
//! in reverse to accumulate gradients.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ops;
use super::params::ModelParams;
use super::{Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub(crate) usize);

/// Operation request for [`Tape::apply`]. Each variant names the inputs it
/// takes positionally; variants carrying data (indices, masks, rates) are
/// attributes of the operation, not differentiable inputs.
#[derive(Debug, Clone)]
pub enum OpSpec {
    Matmul,
    Add,
    Mul,
    /// Concatenate along `axis` (0 or 1). Rank-1 inputs concatenate along 0.
    Concat { axis: usize },
    /// Take `[start, end)` along `axis` of a single input.
    Slice { axis: usize, start: usize, end: usize },
    /// Sum of all elements, producing a scalar.
    Sum,
    /// Mean of all elements, producing a scalar.
    Mean,
    Tanh,
    Sigmoid,
    Relu,
    Log,
    /// Softmax along the last dimension (rows of a matrix, or the whole
    /// vector), numerically stabilized by max subtraction.
    SoftmaxLast,
    /// Row gather from a `[V x d]` table. Gradient scatters into the table.
    EmbeddingLookup { indices: Vec<usize> },
    /// Inverted dropout; identity unless the tape is in training mode.
    Dropout { rate: f64 },
    // Building blocks beyond the core set above.
    LogSoftmaxLast,
    /// Vector softmax where masked entries get probability exactly zero.
    SoftmaxMasked { mask: Vec<bool> },
    /// Elementwise `scale * x + shift`.
    AffineScalar { scale: f64, shift: f64 },
    /// Stack rank-1 inputs into a matrix (or rank-0 inputs into a vector).
    Stack,
    Reshape { shape: Vec<usize> },
    Transpose,
    /// Sliding windows of `width` rows, flattened: `[K x C]` ->
    /// `[K-width+1 x width*C]`.
    Unfold { width: usize },
    /// Max over each row: `[K x J]` -> `[K]`.
    RowMax,
    /// Max over each column: `[K x F]` -> `[F]`.
    ColMax,
    /// Add a column vector to every column of a matrix: `[K x J] + [K]`.
    AddCol,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Matmul(VarId, VarId),
    Add(VarId, VarId),
    Mul(VarId, VarId),
    AddCol(VarId, VarId),
    Concat { axis: usize, inputs: Vec<VarId> },
    Stack { inputs: Vec<VarId> },
    Slice { input: VarId, axis: usize, start: usize, end: usize },
    Sum(VarId),
    Mean(VarId),
    Tanh(VarId),
    Sigmoid(VarId),
    Relu(VarId),
    Log(VarId),
    SoftmaxLast(VarId),
    LogSoftmaxLast(VarId),
    SoftmaxMasked { input: VarId, mask: Vec<bool> },
    AffineScalar { input: VarId, scale: f64 },
    Reshape(VarId),
    Transpose(VarId),
    Unfold { input: VarId, width: usize },
    RowMax { input: VarId, argmax: Vec<usize> },
    ColMax { input: VarId, argmax: Vec<usize> },
    EmbeddingLookup { table: VarId, indices: Vec<usize> },
    Dropout { input: VarId, mask: Vec<f64> },
}

pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    training: bool,
    dropout_rng: ChaCha8Rng,
    bindings: BTreeMap<String, VarId>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// Inference-mode tape: dropout is the identity.
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
            training: false,
            dropout_rng: ChaCha8Rng::seed_from_u64(0),
            bindings: BTreeMap::new(),
            consumed: false,
        }
    }

    /// Training-mode tape; `seed` drives dropout masks.
    pub fn training(seed: u64) -> Self {
        let mut t = Self::new();
        t.training = true;
        t.dropout_rng = ChaCha8Rng::seed_from_u64(seed);
        t
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of recorded (non-leaf) operations still on the tape.
    pub fn recorded_ops(&self) -> usize {
        self.ops.iter().filter(|op| !matches!(op, Op::Leaf)).count()
    }

    pub fn leaf(&mut self, t: Tensor) -> VarId {
        self.push(t, Op::Leaf)
    }

    /// Leaf that does not receive gradients (attention weights built from
    /// constants, literals, etc.).
    pub fn constant(&mut self, t: Tensor) -> VarId {
        let mut t = t;
        t.requires_grad = false;
        self.push(t, Op::Leaf)
    }

    pub fn scalar_const(&mut self, x: f64) -> VarId {
        self.constant(Tensor::scalar(x))
    }

    /// Bind a named parameter onto the tape, once. Subsequent calls with the
    /// same name return the existing handle so gradient accumulation over
    /// repeated uses lands on a single leaf.
    pub fn param(&mut self, name: &str, params: &ModelParams) -> Result<VarId, TensorError> {
        if let Some(&id) = self.bindings.get(name) {
            return Ok(id);
        }
        let t = params
            .get(name)
            .ok_or_else(|| TensorError::Contract(format!("unknown parameter {name}")))?;
        let mut leaf = t.clone();
        leaf.grad = None;
        let id = self.push(leaf, Op::Leaf);
        self.bindings.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn data(&self, id: VarId) -> &[f64] {
        &self.values[id.0].data
    }

    pub fn shape(&self, id: VarId) -> &[usize] {
        &self.values[id.0].shape
    }

    pub fn grad(&self, id: VarId) -> Option<&[f64]> {
        self.values[id.0].grad.as_deref()
    }

    /// Read a single-element tensor as f64.
    pub fn scalar(&self, id: VarId) -> f64 {
        debug_assert_eq!(self.values[id.0].numel(), 1);
        self.values[id.0].data[0]
    }

    fn push(&mut self, t: Tensor, op: Op) -> VarId {
        let id = VarId(self.values.len());
        self.values.push(t);
        self.ops.push(op);
        id
    }

    fn check_inputs(&self, spec: &OpSpec, inputs: &[VarId], want: usize) -> Result<(), TensorError> {
        if inputs.len() != want {
            return Err(TensorError::Contract(format!(
                "{spec:?} expects {want} inputs, got {}",
                inputs.len()
            )));
        }
        for v in inputs {
            if v.0 >= self.values.len() {
                return Err(TensorError::Contract(format!("input {:?} not on this tape", v)));
            }
        }
        Ok(())
    }

    /// Record one operation. The output inherits `requires_grad` from its
    /// inputs and is checked for non-finite values before being returned.
    pub fn apply(&mut self, spec: OpSpec, inputs: &[VarId]) -> Result<VarId, TensorError> {
        if self.consumed {
            return Err(TensorError::Contract("tape already consumed by backward".into()));
        }
        let (out, op) = match &spec {
            OpSpec::Matmul => {
                self.check_inputs(&spec, inputs, 2)?;
                let out = ops::matmul(self.value(inputs[0]), self.value(inputs[1]))?;
                (out, Op::Matmul(inputs[0], inputs[1]))
            }
            OpSpec::Add => {
                self.check_inputs(&spec, inputs, 2)?;
                let out = ops::add(self.value(inputs[0]), self.value(inputs[1]))?;
                (out, Op::Add(inputs[0], inputs[1]))
            }
            OpSpec::Mul => {
                self.check_inputs(&spec, inputs, 2)?;
                let out = ops::mul(self.value(inputs[0]), self.value(inputs[1]))?;
                (out, Op::Mul(inputs[0], inputs[1]))
            }
            OpSpec::AddCol => {
                self.check_inputs(&spec, inputs, 2)?;
                let out = ops::add_col(self.value(inputs[0]), self.value(inputs[1]))?;
                (out, Op::AddCol(inputs[0], inputs[1]))
            }
            OpSpec::Concat { axis } => {
                if inputs.is_empty() {
                    return Err(TensorError::Contract("concat of zero inputs".into()));
                }
                let tensors: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let out = ops::concat(&tensors, *axis)?;
                (out, Op::Concat { axis: *axis, inputs: inputs.to_vec() })
            }
            OpSpec::Stack => {
                if inputs.is_empty() {
                    return Err(TensorError::Contract("stack of zero inputs".into()));
                }
                let tensors: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let out = ops::stack(&tensors)?;
                (out, Op::Stack { inputs: inputs.to_vec() })
            }
            OpSpec::Slice { axis, start, end } => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::slice(self.value(inputs[0]), *axis, *start, *end)?;
                (out, Op::Slice { input: inputs[0], axis: *axis, start: *start, end: *end })
            }
            OpSpec::Sum => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::sum_all(self.value(inputs[0]));
                (out, Op::Sum(inputs[0]))
            }
            OpSpec::Mean => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::mean_all(self.value(inputs[0]));
                (out, Op::Mean(inputs[0]))
            }
            OpSpec::Tanh => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::map_unary(self.value(inputs[0]), f64::tanh);
                (out, Op::Tanh(inputs[0]))
            }
            OpSpec::Sigmoid => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::map_unary(self.value(inputs[0]), ops::sigmoid_scalar);
                (out, Op::Sigmoid(inputs[0]))
            }
            OpSpec::Relu => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::map_unary(self.value(inputs[0]), |x| x.max(0.0));
                (out, Op::Relu(inputs[0]))
            }
            OpSpec::Log => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::map_unary(self.value(inputs[0]), f64::ln);
                (out, Op::Log(inputs[0]))
            }
            OpSpec::SoftmaxLast => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::softmax_last(self.value(inputs[0]))?;
                (out, Op::SoftmaxLast(inputs[0]))
            }
            OpSpec::LogSoftmaxLast => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::log_softmax_last(self.value(inputs[0]))?;
                (out, Op::LogSoftmaxLast(inputs[0]))
            }
            OpSpec::SoftmaxMasked { mask } => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::softmax_masked(self.value(inputs[0]), mask)?;
                (out, Op::SoftmaxMasked { input: inputs[0], mask: mask.clone() })
            }
            OpSpec::AffineScalar { scale, shift } => {
                self.check_inputs(&spec, inputs, 1)?;
                let (scale, shift) = (*scale, *shift);
                let out = ops::map_unary(self.value(inputs[0]), |x| scale * x + shift);
                (out, Op::AffineScalar { input: inputs[0], scale })
            }
            OpSpec::Reshape { shape } => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::reshape(self.value(inputs[0]), shape)?;
                (out, Op::Reshape(inputs[0]))
            }
            OpSpec::Transpose => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::transpose(self.value(inputs[0]))?;
                (out, Op::Transpose(inputs[0]))
            }
            OpSpec::Unfold { width } => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::unfold(self.value(inputs[0]), *width)?;
                (out, Op::Unfold { input: inputs[0], width: *width })
            }
            OpSpec::RowMax => {
                self.check_inputs(&spec, inputs, 1)?;
                let (out, argmax) = ops::row_max(self.value(inputs[0]))?;
                (out, Op::RowMax { input: inputs[0], argmax })
            }
            OpSpec::ColMax => {
                self.check_inputs(&spec, inputs, 1)?;
                let (out, argmax) = ops::col_max(self.value(inputs[0]))?;
                (out, Op::ColMax { input: inputs[0], argmax })
            }
            OpSpec::EmbeddingLookup { indices } => {
                self.check_inputs(&spec, inputs, 1)?;
                let out = ops::embedding_lookup(self.value(inputs[0]), indices)?;
                (out, Op::EmbeddingLookup { table: inputs[0], indices: indices.clone() })
            }
            OpSpec::Dropout { rate } => {
                self.check_inputs(&spec, inputs, 1)?;
                if !self.training || *rate <= 0.0 {
                    return Ok(inputs[0]);
                }
                if !(0.0..1.0).contains(rate) {
                    return Err(TensorError::Contract(format!("dropout rate {rate} outside [0, 1)")));
                }
                let keep = 1.0 - rate;
                let n = self.value(inputs[0]).numel();
                let mask: Vec<f64> = (0..n)
                    .map(|_| if self.dropout_rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let out = ops::apply_mask(self.value(inputs[0]), &mask);
                (out, Op::Dropout { input: inputs[0], mask })
            }
        };
        let mut out = out;
        out.requires_grad = inputs.iter().any(|v| self.values[v.0].requires_grad);
        if !out.is_finite() {
            return Err(TensorError::NonFinite { op: op_name(&op) });
        }
        Ok(self.push(out, op))
    }

    // Convenience wrappers used throughout the model code.

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Matmul, &[a, b])
    }
    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Add, &[a, b])
    }
    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Mul, &[a, b])
    }
    pub fn add_col(&mut self, m: VarId, col: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::AddCol, &[m, col])
    }
    pub fn concat(&mut self, axis: usize, inputs: &[VarId]) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Concat { axis }, inputs)
    }
    pub fn stack(&mut self, inputs: &[VarId]) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Stack, inputs)
    }
    pub fn slice(&mut self, x: VarId, axis: usize, start: usize, end: usize) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Slice { axis, start, end }, &[x])
    }
    pub fn row(&mut self, m: VarId, k: usize) -> Result<VarId, TensorError> {
        let cols = self.shape(m)[1];
        let r = self.slice(m, 0, k, k + 1)?;
        self.reshape(r, vec![cols])
    }
    pub fn sum(&mut self, x: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Sum, &[x])
    }
    pub fn mean(&mut self, x: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Mean, &[x])
    }
    pub fn tanh(&mut self, x: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Tanh, &[x])
    }
    pub fn sigmoid(&mut self, x: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Sigmoid, &[x])
    }
    pub fn relu(&mut self, x: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Relu, &[x])
    }
    pub fn log(&mut self, x: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Log, &[x])
    }
    pub fn softmax_last(&mut self, x: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::SoftmaxLast, &[x])
    }
    pub fn log_softmax_last(&mut self, x: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::LogSoftmaxLast, &[x])
    }
    pub fn softmax_masked(&mut self, x: VarId, mask: &[bool]) -> Result<VarId, TensorError> {
        self.apply(OpSpec::SoftmaxMasked { mask: mask.to_vec() }, &[x])
    }
    pub fn affine(&mut self, x: VarId, scale: f64, shift: f64) -> Result<VarId, TensorError> {
        self.apply(OpSpec::AffineScalar { scale, shift }, &[x])
    }
    pub fn reshape(&mut self, x: VarId, shape: Vec<usize>) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Reshape { shape }, &[x])
    }
    pub fn transpose(&mut self, x: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Transpose, &[x])
    }
    pub fn unfold(&mut self, x: VarId, width: usize) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Unfold { width }, &[x])
    }
    pub fn row_max(&mut self, x: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::RowMax, &[x])
    }
    pub fn col_max(&mut self, x: VarId) -> Result<VarId, TensorError> {
        self.apply(OpSpec::ColMax, &[x])
    }
    pub fn embedding_lookup(&mut self, table: VarId, indices: &[usize]) -> Result<VarId, TensorError> {
        self.apply(OpSpec::EmbeddingLookup { indices: indices.to_vec() }, &[table])
    }
    pub fn dropout(&mut self, x: VarId, rate: f64) -> Result<VarId, TensorError> {
        self.apply(OpSpec::Dropout { rate }, &[x])
    }

    /// Reverse-mode gradient accumulation from a scalar loss. Gradients land
    /// in the `grad` field of every tensor with `requires_grad`; the list of
    /// recorded operations is cleared afterwards, so a tape supports exactly
    /// one backward pass.
    pub fn backward(&mut self, loss: VarId) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::Contract("tape already consumed by backward".into()));
        }
        if self.values.is_empty() {
            return Err(TensorError::Contract("backward on an empty tape".into()));
        }
        let loss_t = &self.values[loss.0];
        if loss_t.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_t.shape
            )));
        }
        let n = self.values.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.values[i].requires_grad {
                continue;
            }
            ops::backward_step(&self.ops[i], &g, &self.values, &mut grads, i)?;
            self.values[i].grad = Some(g);
        }
        // Anything that required gradients but was never reached still
        // reports an explicit zero gradient.
        for v in self.values.iter_mut() {
            if v.requires_grad && v.grad.is_none() {
                v.grad = Some(vec![0.0; v.numel()]);
            }
        }
        self.ops.clear();
        self.ops.resize(self.values.len(), Op::Leaf);
        self.consumed = true;
        Ok(())
    }

    /// Add this tape's parameter gradients (from bound names) into the
    /// `grad` fields of `params`, scaled by `scale`.
    pub fn accumulate_param_grads(&self, params: &mut ModelParams, scale: f64) {
        for (name, id) in &self.bindings {
            let Some(g) = self.values[id.0].grad.as_ref() else { continue };
            params.accumulate_grad(name, g, scale);
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Matmul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::AddCol(..) => "add_col",
        Op::Concat { .. } => "concat",
        Op::Stack { .. } => "stack",
        Op::Slice { .. } => "slice",
        Op::Sum(..) => "sum",
        Op::Mean(..) => "mean",
        Op::Tanh(..) => "tanh",
        Op::Sigmoid(..) => "sigmoid",
        Op::Relu(..) => "relu",
        Op::Log(..) => "log",
        Op::SoftmaxLast(..) => "softmax_lastdim",
        Op::LogSoftmaxLast(..) => "log_softmax_lastdim",
        Op::SoftmaxMasked { .. } => "softmax_masked",
        Op::AffineScalar { .. } => "affine_scalar",
        Op::Reshape(..) => "reshape",
        Op::Transpose(..) => "transpose",
        Op::Unfold { .. } => "unfold",
        Op::RowMax { .. } => "row_max",
        Op::ColMax { .. } => "col_max",
        Op::EmbeddingLookup { .. } => "embedding_lookup",
        Op::Dropout { .. } => "dropout",
    }
}
