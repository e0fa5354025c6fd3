use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gradcheck::check_gradients;

#[test]
fn tensor_shape_must_match_data() {
    assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    let err = Tensor::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
    assert!(matches!(err, TensorError::ShapeMismatch { .. }));
}

#[test]
fn scalar_has_rank_zero() {
    let s = Tensor::scalar(2.5);
    assert_eq!(s.rank(), 0);
    assert_eq!(s.numel(), 1);
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![0.0, 0.0]));
    let s = tape.softmax_last(x).unwrap();
    assert_eq!(tape.data(s), &[0.5, 0.5]);
}

#[test]
fn relu_matches_definition() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![-1.0, 2.0]));
    let r = tape.relu(x).unwrap();
    assert_eq!(tape.data(r), &[0.0, 2.0]);
}

/// Brute-force triple-loop matmul, kept separate from the tape kernel.
fn matmul_oracle(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

#[test]
fn matmul_matches_triple_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut tape = Tape::new();
    let av = tape.leaf(Tensor::new(vec![2, 3], a.clone()).unwrap());
    let bv = tape.leaf(Tensor::new(vec![3, 2], b.clone()).unwrap());
    let c = tape.matmul(av, bv).unwrap();
    assert_eq!(tape.shape(c), &[2, 2]);
    let expected = matmul_oracle(&a, &b, 2, 3, 2);
    for (got, want) in tape.data(c).iter().zip(&expected) {
        assert!(close(*got, *want, 1e-12));
    }
}

#[test]
fn matmul_shape_mismatch_is_descriptive() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(vec![2, 3]));
    let b = tape.leaf(Tensor::zeros(vec![2, 2]));
    let err = tape.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("matmul") && msg.contains("2x3"), "{msg}");
}

#[test]
fn log_of_negative_reports_nonfinite_op() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![-1.0]));
    let err = tape.log(x).unwrap_err();
    assert!(err.to_string().contains("log"), "{err}");
}

#[test]
fn backward_product_rule() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(2.0).with_grad());
    let y = tape.leaf(Tensor::scalar(3.0).with_grad());
    let loss = tape.mul(x, y).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[3.0]);
    assert_eq!(tape.grad(y).unwrap(), &[2.0]);
}

#[test]
fn backward_through_softmax_sum_is_zero() {
    let mut tape = Tape::new();
    let v = tape.leaf(Tensor::from_vec(vec![0.3, -1.2, 0.8]).with_grad());
    let s = tape.softmax_last(v).unwrap();
    let loss = tape.sum(s).unwrap();
    tape.backward(loss).unwrap();
    for g in tape.grad(v).unwrap() {
        assert!(g.abs() < 1e-12, "softmax row sums are constant, grad {g}");
    }
}

#[test]
fn backward_requires_scalar_loss() {
    let mut tape = Tape::new();
    let v = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]).with_grad());
    let err = tape.backward(v).unwrap_err();
    assert!(matches!(err, TensorError::Contract(_)));
}

#[test]
fn backward_clears_recorded_ops() {
    let mut tape = Tape::new();
    let v = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]).with_grad());
    let s = tape.sum(v).unwrap();
    assert_eq!(tape.recorded_ops(), 1);
    tape.backward(s).unwrap();
    assert_eq!(tape.recorded_ops(), 0);
    let t = tape.tanh(v).unwrap_err();
    assert!(matches!(t, TensorError::Contract(_)));
}

#[test]
fn three_layer_composition_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut params = ModelParams::new();
    params.add_xavier(&mut rng, "w1", 4, 3);
    params.add_xavier(&mut rng, "w2", 4, 4);
    params.add_xavier_vec(&mut rng, "w3", 4);
    params.insert("x", Tensor::from_vec((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()));

    let report = check_gradients(&params, |tape, p| {
        let w1 = tape.param("w1", p)?;
        let w2 = tape.param("w2", p)?;
        let w3 = tape.param("w3", p)?;
        let x = tape.param("x", p)?;
        let h1 = tape.matmul(w1, x)?;
        let h1 = tape.tanh(h1)?;
        let h2 = tape.matmul(w2, h1)?;
        let h2 = tape.sigmoid(h2)?;
        tape.matmul(w3, h2)
    })
    .unwrap();
    assert!(report.passes(), "rel err {} at {}", report.max_rel_err, report.worst);
}

#[test]
fn softmax_shift_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::from_vec(logits.clone()));
    let shifted_leaf = tape.leaf(Tensor::from_vec(logits.iter().map(|v| v + 17.5).collect()));
    let sa = tape.softmax_last(a).unwrap();
    let sb = tape.softmax_last(shifted_leaf).unwrap();
    for (x, y) in tape.data(sa).iter().zip(tape.data(sb)) {
        assert!(close(*x, *y, 1e-9));
    }
}

#[test]
fn dropout_only_active_in_training_mode() {
    let data: Vec<f64> = (0..64).map(|i| i as f64 + 1.0).collect();
    let mut eval_tape = Tape::new();
    let x = eval_tape.leaf(Tensor::from_vec(data.clone()));
    let y = eval_tape.dropout(x, 0.5).unwrap();
    assert_eq!(x, y, "inference dropout must be the identity");

    let mut train_tape = Tape::training(9);
    let x = train_tape.leaf(Tensor::from_vec(data.clone()));
    let y = train_tape.dropout(x, 0.5).unwrap();
    let out = train_tape.data(y);
    let zeros = out.iter().filter(|v| **v == 0.0).count();
    assert!(zeros > 0 && zeros < 64, "expected a nontrivial mask, got {zeros} zeros");
    for (i, v) in out.iter().enumerate() {
        if *v != 0.0 {
            assert!(close(*v, data[i] * 2.0, 1e-12), "inverted dropout scales by 1/keep");
        }
    }

    // Same seed, same mask.
    let mut train_tape2 = Tape::training(9);
    let x2 = train_tape2.leaf(Tensor::from_vec(data));
    let y2 = train_tape2.dropout(x2, 0.5).unwrap();
    assert_eq!(train_tape.data(y), train_tape2.data(y2));
}

#[test]
fn masked_softmax_zeroes_masked_entries() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![5.0, 1.0, 3.0]));
    let s = tape.softmax_masked(x, &[true, false, true]).unwrap();
    let d = tape.data(s);
    assert_eq!(d[1], 0.0);
    assert!(close(d[0] + d[2], 1.0, 1e-12));

    let err = tape.softmax_masked(x, &[false, false, false]).unwrap_err();
    assert!(matches!(err, TensorError::Contract(_)));
}

#[test]
fn gru_zero_weights_halves_previous_state() {
    let mut params = ModelParams::new();
    for gate in ["z", "r", "h"] {
        params.insert(&format!("g.w{gate}"), Tensor::zeros(vec![3, 2]));
        params.insert(&format!("g.u{gate}"), Tensor::zeros(vec![3, 3]));
        params.insert(&format!("g.b{gate}"), Tensor::zeros(vec![3]));
    }
    let mut tape = Tape::new();
    let p = GruParams::bind(&mut tape, &params, "g").unwrap();
    let x = tape.leaf(Tensor::from_vec(vec![0.7, -0.2]));
    let h = tape.leaf(Tensor::from_vec(vec![1.0, -2.0, 0.5]));
    let h_next = gru_cell(&mut tape, x, h, &p).unwrap();
    assert_eq!(tape.data(h_next), &[0.5, -1.0, 0.25]);

    let h0 = tape.leaf(Tensor::from_vec(vec![0.0, 0.0, 0.0]));
    let z = gru_cell(&mut tape, x, h0, &p).unwrap();
    assert_eq!(tape.data(z), &[0.0, 0.0, 0.0]);
}

#[test]
fn gru_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut params = ModelParams::new();
    GruParams::register(&mut params, &mut rng, "g", 3, 4);
    params.insert("x", Tensor::from_vec((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()));
    params.insert("h", Tensor::from_vec((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()));
    let report = check_gradients(&params, |tape, p| {
        let g = GruParams::bind(tape, p, "g")?;
        let x = tape.param("x", p)?;
        let h = tape.param("h", p)?;
        let h_next = gru_cell(tape, x, h, &g)?;
        tape.sum(h_next)
    })
    .unwrap();
    assert!(report.passes(), "rel err {} at {}", report.max_rel_err, report.worst);
}

#[test]
fn lstm_zero_weights_and_zero_cell_give_zero_output() {
    let mut params = ModelParams::new();
    for gate in ["i", "f", "o", "g"] {
        params.insert(&format!("l.w{gate}"), Tensor::zeros(vec![3, 2]));
        params.insert(&format!("l.u{gate}"), Tensor::zeros(vec![3, 3]));
        params.insert(&format!("l.b{gate}"), Tensor::zeros(vec![3]));
    }
    let mut tape = Tape::new();
    let p = LstmParams::bind(&mut tape, &params, "l").unwrap();
    let x = tape.leaf(Tensor::from_vec(vec![0.3, 0.9]));
    let h = tape.leaf(Tensor::from_vec(vec![0.5, -0.5, 1.0]));
    let c = tape.leaf(Tensor::from_vec(vec![0.0, 0.0, 0.0]));
    let (h_next, _) = lstm_cell(&mut tape, x, h, c, &p).unwrap();
    assert_eq!(tape.data(h_next), &[0.0, 0.0, 0.0]);
}

#[test]
fn lstm_nonzero_bias_breaks_zero_fixed_point() {
    let mut params = ModelParams::new();
    for gate in ["i", "f", "o", "g"] {
        params.insert(&format!("l.w{gate}"), Tensor::zeros(vec![2, 2]));
        params.insert(&format!("l.u{gate}"), Tensor::zeros(vec![2, 2]));
        params.insert(&format!("l.b{gate}"), Tensor::from_vec(vec![1.0, 1.0]));
    }
    let mut tape = Tape::new();
    let p = LstmParams::bind(&mut tape, &params, "l").unwrap();
    let x = tape.leaf(Tensor::from_vec(vec![0.0, 0.0]));
    let h = tape.leaf(Tensor::from_vec(vec![0.0, 0.0]));
    let c = tape.leaf(Tensor::from_vec(vec![0.0, 0.0]));
    let (h_next, c_next) = lstm_cell(&mut tape, x, h, c, &p).unwrap();
    // i = f = o = sigmoid(1), g = tanh(1), c' = i*g, h' = o*tanh(c').
    let sig1 = 1.0 / (1.0 + (-1.0f64).exp());
    let c_expect = sig1 * 1.0f64.tanh();
    let h_expect = sig1 * c_expect.tanh();
    for v in tape.data(c_next) {
        assert!(close(*v, c_expect, 1e-12));
    }
    for v in tape.data(h_next) {
        assert!(close(*v, h_expect, 1e-12));
        assert!(*v != 0.0);
    }
}

#[test]
fn lstm_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut params = ModelParams::new();
    LstmParams::register(&mut params, &mut rng, "l", 3, 4);
    params.insert("x", Tensor::from_vec((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()));
    params.insert("h", Tensor::from_vec((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()));
    params.insert("c", Tensor::from_vec((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()));
    let report = check_gradients(&params, |tape, p| {
        let l = LstmParams::bind(tape, p, "l")?;
        let x = tape.param("x", p)?;
        let h = tape.param("h", p)?;
        let c = tape.param("c", p)?;
        let (h_next, c_next) = lstm_cell(tape, x, h, c, &l)?;
        let s1 = tape.sum(h_next)?;
        let s2 = tape.sum(c_next)?;
        tape.add(s1, s2)
    })
    .unwrap();
    assert!(report.passes(), "rel err {} at {}", report.max_rel_err, report.worst);
}

#[test]
fn adam_first_step_moves_by_lr_times_sign() {
    let mut params = ModelParams::new();
    params.insert("w", Tensor::scalar(1.0));
    params.get_mut("w").unwrap().grad = Some(vec![0.5]);
    let mut state = AdamState::new(0.001);
    adam_step(&mut params, &mut state).unwrap();
    let w = params.get("w").unwrap().data[0];
    // Bias-corrected first step: delta = -lr * g / (|g| + eps).
    let expected = 1.0 - 0.001 * 0.5 / (0.5 + 1e-8);
    assert!(close(w, expected, 1e-6), "got {w}, want {expected}");
    assert!(close(w, 1.0 - 0.001, 1e-6), "first step is -lr*sign(g)");
}

#[test]
fn adam_zero_gradient_leaves_parameters_unchanged() {
    let mut params = ModelParams::new();
    params.insert("w", Tensor::from_vec(vec![0.25, -0.75]));
    params.zero_grads();
    let mut state = AdamState::new(0.01);
    adam_step(&mut params, &mut state).unwrap();
    assert_eq!(params.get("w").unwrap().data, vec![0.25, -0.75]);
}

#[test]
fn adam_constant_gradient_step_sizes_do_not_grow() {
    let mut params = ModelParams::new();
    params.insert("w", Tensor::scalar(0.0));
    let mut state = AdamState::new(0.001);
    params.get_mut("w").unwrap().grad = Some(vec![0.3]);
    adam_step(&mut params, &mut state).unwrap();
    let w1 = params.get("w").unwrap().data[0];
    let d1 = w1.abs();
    params.get_mut("w").unwrap().grad = Some(vec![0.3]);
    adam_step(&mut params, &mut state).unwrap();
    let w2 = params.get("w").unwrap().data[0];
    let d2 = (w2 - w1).abs();
    assert!(d2 <= d1 * (1.0 + 1e-6), "|step2|={d2} vs |step1|={d1}");
}

#[test]
fn adam_missing_gradient_is_a_contract_error() {
    let mut params = ModelParams::new();
    params.insert("w", Tensor::scalar(1.0));
    let mut state = AdamState::new(0.001);
    let err = adam_step(&mut params, &mut state).unwrap_err();
    assert!(err.to_string().contains("missing gradient"), "{err}");
}

#[test]
fn apply_dispatch_covers_core_ops() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = tape.leaf(Tensor::new(vec![2, 2], vec![0.5, 0.5, 0.5, 0.5]).unwrap());
    let mm = tape.apply(OpSpec::Matmul, &[a, b]).unwrap();
    let added = tape.apply(OpSpec::Add, &[mm, a]).unwrap();
    let mul = tape.apply(OpSpec::Mul, &[added, a]).unwrap();
    let cat = tape.apply(OpSpec::Concat { axis: 0 }, &[mul, a]).unwrap();
    assert_eq!(tape.shape(cat), &[4, 2]);
    let sl = tape.apply(OpSpec::Slice { axis: 0, start: 1, end: 3 }, &[cat]).unwrap();
    assert_eq!(tape.shape(sl), &[2, 2]);
    let sm = tape.apply(OpSpec::SoftmaxLast, &[sl]).unwrap();
    for row in tape.data(sm).chunks(2) {
        assert!(close(row.iter().sum::<f64>(), 1.0, 1e-9));
        assert!(row.iter().all(|v| *v >= 0.0));
    }
    let s = tape.apply(OpSpec::Sum, &[sm]).unwrap();
    assert!(close(tape.scalar(s), 2.0, 1e-9));
    let m = tape.apply(OpSpec::Mean, &[sm]).unwrap();
    assert!(close(tape.scalar(m), 0.5, 1e-9));
}

#[test]
fn determinism_same_seed_same_forward_bits() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut params = ModelParams::new();
        params.add_xavier(&mut rng, "w", 4, 4);
        let mut tape = Tape::training(4);
        let w = tape.param("w", &params).unwrap();
        let d = tape.dropout(w, 0.2).unwrap();
        let t = tape.tanh(d).unwrap();
        let s = tape.sum(t).unwrap();
        tape.scalar(s)
    };
    let a = run();
    let b = run();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn embedding_lookup_gradient_scatters_to_rows() {
    let mut params = ModelParams::new();
    params.insert("emb", Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let mut tape = Tape::new();
    let e = tape.param("emb", &params).unwrap();
    let rows = tape.embedding_lookup(e, &[2, 0, 2]).unwrap();
    assert_eq!(tape.data(rows), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
    let s = tape.sum(rows).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(e).unwrap(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
}

#[test]
fn unfold_row_and_col_max_shapes() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![4, 2], vec![1.0, 0.0, 2.0, 5.0, 3.0, 1.0, 0.0, 7.0]).unwrap());
    let u = tape.unfold(x, 3).unwrap();
    assert_eq!(tape.shape(u), &[2, 6]);
    assert_eq!(tape.data(u), &[1.0, 0.0, 2.0, 5.0, 3.0, 1.0, 2.0, 5.0, 3.0, 1.0, 0.0, 7.0]);
    let rm = tape.row_max(x).unwrap();
    assert_eq!(tape.data(rm), &[1.0, 5.0, 3.0, 7.0]);
    let cm = tape.col_max(x).unwrap();
    assert_eq!(tape.data(cm), &[3.0, 7.0]);
}

#[test]
fn checkpoint_roundtrip_quantizes_to_f32() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut params = ModelParams::new();
    params.add_xavier(&mut rng, "a.w", 3, 5);
    params.add_normal(&mut rng, "b.emb", vec![7, 2], 0.1);
    save_checkpoint(&params, &path).unwrap();
    assert!(manifest_path(&path).exists());
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.len(), params.len());
    for (name, t) in params.iter() {
        let lt = loaded.get(name).unwrap();
        assert_eq!(lt.shape, t.shape);
        for (a, b) in lt.data.iter().zip(&t.data) {
            assert!(close(*a, *b, 1e-6), "{name}: {a} vs {b}");
            assert_eq!(*a, *b as f32 as f64, "stored value is the f32 rounding");
        }
    }
}
