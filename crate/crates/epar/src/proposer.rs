//! Answer Proposer: encodes the leaf document of one reasoning chain while
//! attending to its ancestor documents, then scores every candidate against
//! the attention-pooled leaf representation.
//!
//! Also houses the two similarity blocks shared across the system:
//! `alpha(h, u) = w2 . ((W1 h + b1) o u)` and
//! `beta(h, u) = w1 . relu(W2 [h; u; h o u] + b2) + b1`.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::EncodedInstance;
use crate::tensor::{lstm_cell, LstmParams, ModelParams, Tape, Tensor, TensorError, VarId};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProposerConfig {
    /// Contextual dimension 2v of document words and query finals.
    pub input_dim: usize,
    /// Decoder LSTM hidden size.
    pub hidden: usize,
    /// Ancestor-attention inner dimension.
    pub attn_dim: usize,
    /// Hidden width of the beta scoring block.
    pub beta_hidden: usize,
}

/// Whether the decoder attends to ancestor documents or runs leaf-only
/// (the "no attention" ablation; also the T=1 path where no ancestors
/// exist).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApMode {
    Full,
    NoAttention,
}

/// Parameters of one alpha similarity block.
pub struct AlphaParams {
    w1: VarId,
    b1: VarId,
    w2: VarId,
}

impl AlphaParams {
    pub fn register(
        params: &mut ModelParams,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        h_dim: usize,
        u_dim: usize,
    ) {
        params.add_xavier(rng, &format!("{prefix}.w1"), u_dim, h_dim);
        params.add_zeros(&format!("{prefix}.b1"), vec![u_dim]);
        params.add_xavier_vec(rng, &format!("{prefix}.w2"), u_dim);
    }

    pub fn bind(tape: &mut Tape, params: &ModelParams, prefix: &str) -> Result<Self, TensorError> {
        Ok(AlphaParams {
            w1: tape.param(&format!("{prefix}.w1"), params)?,
            b1: tape.param(&format!("{prefix}.b1"), params)?,
            w2: tape.param(&format!("{prefix}.w2"), params)?,
        })
    }
}

/// `alpha(h, u)`: project `h` into `u`'s space, gate elementwise by `u`,
/// reduce to a scalar.
pub fn alpha(tape: &mut Tape, p: &AlphaParams, h: VarId, u: VarId) -> Result<VarId, TensorError> {
    let proj = tape.matmul(p.w1, h)?;
    let proj = tape.add(proj, p.b1)?;
    let gated = tape.mul(proj, u)?;
    tape.matmul(p.w2, gated)
}

/// Parameters of one beta similarity block.
pub struct BetaParams {
    w2: VarId,
    b2: VarId,
    w1: VarId,
    b1: VarId,
}

impl BetaParams {
    pub fn register(
        params: &mut ModelParams,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        dim: usize,
        hidden: usize,
    ) {
        params.add_xavier(rng, &format!("{prefix}.w2"), hidden, 3 * dim);
        params.add_zeros(&format!("{prefix}.b2"), vec![hidden]);
        params.add_xavier_vec(rng, &format!("{prefix}.w1"), hidden);
        params.add_zeros(&format!("{prefix}.b1"), vec![]);
    }

    pub fn bind(tape: &mut Tape, params: &ModelParams, prefix: &str) -> Result<Self, TensorError> {
        Ok(BetaParams {
            w2: tape.param(&format!("{prefix}.w2"), params)?,
            b2: tape.param(&format!("{prefix}.b2"), params)?,
            w1: tape.param(&format!("{prefix}.w1"), params)?,
            b1: tape.param(&format!("{prefix}.b1"), params)?,
        })
    }
}

/// `beta(h, u)`: relu MLP over `[h; u; h o u]`, reduced to a scalar.
pub fn beta(tape: &mut Tape, p: &BetaParams, h: VarId, u: VarId) -> Result<VarId, TensorError> {
    let hu = tape.mul(h, u)?;
    let cat = tape.concat(0, &[h, u, hu])?;
    let z = tape.matmul(p.w2, cat)?;
    let z = tape.add(z, p.b2)?;
    let z = tape.relu(z)?;
    let s = tape.matmul(p.w1, z)?;
    tape.add(s, p.b1)
}

pub fn register_proposer_params(
    params: &mut ModelParams,
    rng: &mut ChaCha8Rng,
    cfg: &ProposerConfig,
) {
    // Decoder input is [previous leaf word; previous ancestor context].
    LstmParams::register(params, rng, "ap.lstm", 2 * cfg.input_dim, cfg.hidden);
    params.add_xavier(rng, "ap.attn.w_h", cfg.input_dim, cfg.attn_dim);
    params.add_xavier(rng, "ap.attn.w_s", cfg.attn_dim, cfg.hidden);
    params.add_zeros("ap.attn.b", vec![cfg.attn_dim]);
    params.add_xavier_vec(rng, "ap.attn.v", cfg.attn_dim);
    AlphaParams::register(params, rng, "ap.alpha", cfg.hidden, cfg.input_dim);
    BetaParams::register(params, rng, "ap.beta", cfg.input_dim, cfg.beta_hidden);
}

pub struct ProposerBind {
    lstm: LstmParams,
    attn_w_h: VarId,
    attn_w_s: VarId,
    attn_b: VarId,
    attn_v: VarId,
    alpha: AlphaParams,
    beta: BetaParams,
}

impl ProposerBind {
    pub fn bind(tape: &mut Tape, params: &ModelParams) -> Result<Self, TensorError> {
        Ok(ProposerBind {
            lstm: LstmParams::bind(tape, params, "ap.lstm")?,
            attn_w_h: tape.param("ap.attn.w_h", params)?,
            attn_w_s: tape.param("ap.attn.w_s", params)?,
            attn_b: tape.param("ap.attn.b", params)?,
            attn_v: tape.param("ap.attn.v", params)?,
            alpha: AlphaParams::bind(tape, params, "ap.alpha")?,
            beta: BetaParams::bind(tape, params, "ap.beta")?,
        })
    }
}

/// Inputs for proposing from one chain: the leaf word matrix and the
/// ancestors concatenated along the word axis (empty for 1-hop chains).
pub struct ChainInput {
    pub leaf_h: VarId,
    pub ancestors_h: Option<VarId>,
}

impl ChainInput {
    pub fn from_chain(
        tape: &mut Tape,
        enc: &EncodedInstance,
        chain_docs: &[usize],
    ) -> Result<Self, TensorError> {
        let leaf = *chain_docs.last().expect("chain is non-empty");
        let ancestors_h = if chain_docs.len() > 1 {
            let parts: Vec<VarId> =
                chain_docs[..chain_docs.len() - 1].iter().map(|&d| enc.doc_h[d]).collect();
            Some(tape.concat(0, &parts)?)
        } else {
            None
        };
        Ok(ChainInput { leaf_h: enc.doc_h[leaf], ancestors_h })
    }
}

/// Ancestor-aware leaf states: one decoder state per leaf word, attending
/// over the ancestor words at each step. Returns the states `[K x hidden]`
/// and the per-step ancestor attention distributions (empty without
/// ancestors).
pub fn encode_ancestor_aware(
    tape: &mut Tape,
    ap: &ProposerBind,
    cfg: &ProposerConfig,
    chain: &ChainInput,
    mode: ApMode,
) -> Result<(VarId, Vec<VarId>), TensorError> {
    let k = tape.shape(chain.leaf_h)[0];
    let use_attention = mode == ApMode::Full && chain.ancestors_h.is_some();
    // Precompute W_h over ancestor rows once per chain.
    let anc_proj = match (use_attention, chain.ancestors_h) {
        (true, Some(anc)) => Some((anc, tape.matmul(anc, ap.attn_w_h)?)),
        _ => None,
    };

    let zero_word = tape.constant(Tensor::zeros(vec![cfg.input_dim]));
    let zero_ctx = tape.constant(Tensor::zeros(vec![cfg.input_dim]));
    let zero_h = tape.constant(Tensor::zeros(vec![cfg.hidden]));
    let zero_c = tape.constant(Tensor::zeros(vec![cfg.hidden]));

    let mut states = Vec::with_capacity(k);
    let mut attns = Vec::new();
    let (mut s, mut cell) = (zero_h, zero_c);
    let mut ctx = zero_ctx;
    for step in 0..k {
        let prev_word = if step == 0 { zero_word } else { tape.row(chain.leaf_h, step - 1)? };
        let input = tape.concat(0, &[prev_word, ctx])?;
        let (ns, nc) = lstm_cell(tape, input, s, cell, &ap.lstm)?;
        s = ns;
        cell = nc;
        states.push(s);
        if let Some((anc, anc_proj)) = anc_proj {
            // e_i = v . tanh(W_h anc_i + W_s s + b), attention over ancestors.
            let ws = tape.matmul(ap.attn_w_s, s)?;
            let ws_b = tape.add(ws, ap.attn_b)?;
            let pre = tape.add(anc_proj, ws_b)?;
            let pre = tape.tanh(pre)?;
            let e = tape.matmul(pre, ap.attn_v)?;
            let a = tape.softmax_last(e)?;
            attns.push(a);
            ctx = tape.matmul(a, anc)?;
        } else {
            ctx = zero_ctx;
        }
    }
    let y = tape.stack(&states)?;
    Ok((y, attns))
}

/// Outcome of proposing from one chain.
pub struct ProposalResult {
    /// Ancestor-aware states `[K x hidden]`.
    pub states: VarId,
    /// Word distribution over the leaf, `[K]`.
    pub epsilon: VarId,
    /// Attention-pooled leaf vector, `[2v]`.
    pub pooled: VarId,
    /// Per-candidate score logits, `[L]`.
    pub scores: VarId,
    /// Proposed candidate (argmax score, lowest index on ties).
    pub proposed: usize,
    /// Per-step ancestor attention distributions.
    pub ancestor_attns: Vec<VarId>,
}

/// Lowest-index argmax.
pub(crate) fn argmax_tiebreak_low(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Full proposal for one chain: word distribution `epsilon` from
/// `alpha(y_k, u_s) + alpha(y_k, u_b)`, pooled leaf vector, and
/// `beta(c_l, pooled)` scores over all candidates.
pub fn propose(
    tape: &mut Tape,
    ap: &ProposerBind,
    cfg: &ProposerConfig,
    enc: &EncodedInstance,
    chain: &ChainInput,
    mode: ApMode,
) -> Result<ProposalResult, TensorError> {
    if enc.candidates.is_empty() {
        return Err(TensorError::Contract("propose: no candidates".into()));
    }
    let (states, ancestor_attns) = encode_ancestor_aware(tape, ap, cfg, chain, mode)?;
    let k = tape.shape(states)[0];
    let mut word_logits = Vec::with_capacity(k);
    for step in 0..k {
        let y = tape.row(states, step)?;
        let a_s = alpha(tape, &ap.alpha, y, enc.u_s)?;
        let a_b = alpha(tape, &ap.alpha, y, enc.u_b)?;
        word_logits.push(tape.add(a_s, a_b)?);
    }
    let w = tape.stack(&word_logits)?;
    let epsilon = tape.softmax_last(w)?;
    let pooled = tape.matmul(epsilon, chain.leaf_h)?;

    let mut scores = Vec::with_capacity(enc.candidates.len());
    for &c in &enc.candidates {
        scores.push(beta(tape, &ap.beta, c, pooled)?);
    }
    let scores = tape.stack(&scores)?;
    let proposed = argmax_tiebreak_low(tape.data(scores));
    Ok(ProposalResult { states, epsilon, pooled, scores, proposed, ancestor_attns })
}
