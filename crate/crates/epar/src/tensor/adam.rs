//! Adam optimizer with bias correction.

use std::collections::BTreeMap;

use super::params::ModelParams;
use super::TensorError;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

/// Apply one bias-corrected Adam update to every parameter, consuming the
/// gradients stored on the parameters. A parameter without a gradient is a
/// contract error; accumulate explicit zeros for parameters that did not
/// participate in the step.
pub fn adam_step(params: &mut ModelParams, state: &mut AdamState) -> Result<(), TensorError> {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    for (name, tensor) in params.iter_mut() {
        let grad = tensor
            .grad
            .as_ref()
            .ok_or_else(|| TensorError::Contract(format!("missing gradient for parameter {name}")))?;
        if grad.len() != tensor.data.len() {
            return Err(TensorError::Contract(format!(
                "gradient length {} does not match parameter {name} of {} values",
                grad.len(),
                tensor.data.len()
            )));
        }
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; grad.len()]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; grad.len()]);
        for idx in 0..grad.len() {
            let g = grad[idx];
            m[idx] = state.beta1 * m[idx] + (1.0 - state.beta1) * g;
            v[idx] = state.beta2 * v[idx] + (1.0 - state.beta2) * g * g;
            let m_hat = m[idx] / bc1;
            let v_hat = v[idx] / bc2;
            tensor.data[idx] -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    params.clear_grads();
    Ok(())
}
