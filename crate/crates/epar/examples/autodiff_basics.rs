//! Tensor-core walkthrough: record operations on a tape, run backward, and
//! cross-check one gradient against central finite differences.
//!
//! ```bash
//! cargo run -p epar --example autodiff_basics
//! ```

use epar::gradcheck::check_gradients;
use epar::tensor::{adam_step, AdamState, ModelParams, Tape, Tensor};

fn main() -> anyhow::Result<()> {
    // Forward: loss = mean(tanh(W x + b)^2)
    let mut params = ModelParams::new();
    params.insert("w", Tensor::new(vec![3, 2], vec![0.4, -0.3, 0.2, 0.7, -0.5, 0.1])?);
    params.insert("b", Tensor::from_vec(vec![0.05, -0.1, 0.2]));
    params.insert("x", Tensor::from_vec(vec![0.8, -0.6]));

    let build = |tape: &mut Tape, p: &ModelParams| {
        let w = tape.param("w", p)?;
        let b = tape.param("b", p)?;
        let x = tape.param("x", p)?;
        let wx = tape.matmul(w, x)?;
        let pre = tape.add(wx, b)?;
        let t = tape.tanh(pre)?;
        let sq = tape.mul(t, t)?;
        tape.mean(sq)
    };

    let mut tape = Tape::new();
    let loss = build(&mut tape, &params)?;
    println!("loss = {:.6}", tape.scalar(loss));
    tape.backward(loss)?;
    params.zero_grads();
    tape.accumulate_param_grads(&mut params, 1.0);
    println!("dL/db = {:?}", params.get("b").unwrap().grad.as_ref().unwrap());

    // The finite-difference oracle re-evaluates the same forward closure at
    // perturbed parameter values; it never touches the backward pass.
    let report = check_gradients(&params, build)?;
    println!(
        "finite-difference check over {} elements: max rel err {:.2e} ({})",
        report.checked,
        report.max_rel_err,
        if report.passes() { "pass" } else { "FAIL" }
    );

    // One Adam step with the gradients still attached.
    let w_before = params.get("w").unwrap().data.clone();
    let mut adam = AdamState::new(0.01);
    adam_step(&mut params, &mut adam)?;
    let w_after = &params.get("w").unwrap().data;
    println!("w[0]: {:.6} -> {:.6}", w_before[0], w_after[0]);
    Ok(())
}
