//! Word/character embedding, Highway merge, bidirectional recurrent
//! encoding, document summaries, and candidate embeddings.
//!
//! Per token: a char-CNN (1-D convolution over character embeddings,
//! max-over-time) is concatenated with the word vector, projected to
//! dimension `d`, and passed through a 2-layer Highway network. Documents
//! and the query are encoded separately by a BiLSTM of hidden size `v`,
//! giving `[K x 2v]` contextual matrices; summaries come from either a
//! two-layer tanh self-attention or the final hidden states.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{locate_candidate_mentions, QueryInstance, Vocabulary};
use crate::tensor::{lstm_cell, LstmParams, ModelParams, Tape, Tensor, TensorError, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryMode {
    SelfAttention,
    LastHiddenState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Merged embedding dimension.
    pub d: usize,
    /// Recurrent hidden size; contextual vectors are `2v`.
    pub v: usize,
    pub char_dim: usize,
    pub char_conv_width: usize,
    pub char_filters: usize,
    pub summary: SummaryMode,
    pub self_attn_dim: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    pub fn small(d: usize, v: usize) -> Self {
        EncoderConfig {
            d,
            v,
            char_dim: 8,
            char_conv_width: 5,
            char_filters: (d / 2).max(1),
            summary: SummaryMode::LastHiddenState,
            self_attn_dim: 2 * v,
            dropout: 0.2,
        }
    }
}

pub fn register_encoder_params(
    params: &mut ModelParams,
    rng: &mut ChaCha8Rng,
    cfg: &EncoderConfig,
    vocab: &Vocabulary,
) {
    params.insert("enc.word_emb", vocab.embedding_tensor());
    params.add_normal(rng, "enc.char_emb", vec![vocab.num_chars(), cfg.char_dim], 0.1);
    params.zero_rows("enc.char_emb", &[crate::corpus::PAD]).expect("char_emb exists");
    params.add_xavier(rng, "enc.conv.w", cfg.char_conv_width * cfg.char_dim, cfg.char_filters);
    params.add_zeros("enc.conv.b", vec![cfg.char_filters]);
    let merged = cfg.d + cfg.char_filters;
    params.add_xavier(rng, "enc.proj.w", merged, cfg.d);
    params.add_zeros("enc.proj.b", vec![cfg.d]);
    for layer in ["hw1", "hw2"] {
        params.add_xavier(rng, &format!("enc.{layer}.wt"), cfg.d, cfg.d);
        params.add_zeros(&format!("enc.{layer}.bt"), vec![cfg.d]);
        params.add_xavier(rng, &format!("enc.{layer}.wh"), cfg.d, cfg.d);
        params.add_zeros(&format!("enc.{layer}.bh"), vec![cfg.d]);
    }
    LstmParams::register(params, rng, "enc.lstm_fwd", cfg.d, cfg.v);
    LstmParams::register(params, rng, "enc.lstm_bwd", cfg.d, cfg.v);
    if cfg.summary == SummaryMode::SelfAttention {
        params.add_xavier(rng, "enc.selfattn.w1", 2 * cfg.v, cfg.self_attn_dim);
        params.add_zeros("enc.selfattn.b1", vec![cfg.self_attn_dim]);
        params.add_xavier_vec(rng, "enc.selfattn.w2", cfg.self_attn_dim);
        params.add_zeros("enc.selfattn.b2", vec![]);
    }
    params.add_xavier(rng, "enc.cand_proj.w", 2 * cfg.v, cfg.d);
}

/// Tape-bound handles for all encoder weights.
pub struct EncoderBind {
    pub word_emb: VarId,
    char_emb: VarId,
    conv_w: VarId,
    conv_b: VarId,
    proj_w: VarId,
    proj_b: VarId,
    hw: [(VarId, VarId, VarId, VarId); 2],
    pub lstm_fwd: LstmParams,
    pub lstm_bwd: LstmParams,
    selfattn: Option<(VarId, VarId, VarId, VarId)>,
    cand_proj: VarId,
}

impl EncoderBind {
    pub fn bind(tape: &mut Tape, params: &ModelParams, cfg: &EncoderConfig) -> Result<Self, TensorError> {
        let hw1 = (
            tape.param("enc.hw1.wt", params)?,
            tape.param("enc.hw1.bt", params)?,
            tape.param("enc.hw1.wh", params)?,
            tape.param("enc.hw1.bh", params)?,
        );
        let hw2 = (
            tape.param("enc.hw2.wt", params)?,
            tape.param("enc.hw2.bt", params)?,
            tape.param("enc.hw2.wh", params)?,
            tape.param("enc.hw2.bh", params)?,
        );
        let selfattn = if cfg.summary == SummaryMode::SelfAttention {
            Some((
                tape.param("enc.selfattn.w1", params)?,
                tape.param("enc.selfattn.b1", params)?,
                tape.param("enc.selfattn.w2", params)?,
                tape.param("enc.selfattn.b2", params)?,
            ))
        } else {
            None
        };
        Ok(EncoderBind {
            word_emb: tape.param("enc.word_emb", params)?,
            char_emb: tape.param("enc.char_emb", params)?,
            conv_w: tape.param("enc.conv.w", params)?,
            conv_b: tape.param("enc.conv.b", params)?,
            proj_w: tape.param("enc.proj.w", params)?,
            proj_b: tape.param("enc.proj.b", params)?,
            hw: [hw1, hw2],
            lstm_fwd: LstmParams::bind(tape, params, "enc.lstm_fwd")?,
            lstm_bwd: LstmParams::bind(tape, params, "enc.lstm_bwd")?,
            selfattn,
            cand_proj: tape.param("enc.cand_proj.w", params)?,
        })
    }
}

/// One Highway layer: `y = t o tanh(x Wh + bh) + (1 - t) o x` with
/// transform gate `t = sigmoid(x Wt + bt)`, applied row-wise.
pub fn highway(
    tape: &mut Tape,
    x: VarId,
    wt: VarId,
    bt: VarId,
    wh: VarId,
    bh: VarId,
) -> Result<VarId, TensorError> {
    let t_pre = tape.matmul(x, wt)?;
    let t_pre = tape.add(t_pre, bt)?;
    let t = tape.sigmoid(t_pre)?;
    let h_pre = tape.matmul(x, wh)?;
    let h_pre = tape.add(h_pre, bh)?;
    let h = tape.tanh(h_pre)?;
    let th = tape.mul(t, h)?;
    let one_minus_t = tape.affine(t, -1.0, 1.0)?;
    let carry = tape.mul(one_minus_t, x)?;
    tape.add(th, carry)
}

/// Merged word representation `[K x d]` for a token sequence: char-CNN
/// features concatenated with word vectors, projected, then two Highway
/// layers.
pub fn embed_words(
    tape: &mut Tape,
    bind: &EncoderBind,
    cfg: &EncoderConfig,
    vocab: &Vocabulary,
    tokens: &[String],
) -> Result<VarId, TensorError> {
    let word_ids = vocab.word_ids(tokens);
    let words = tape.embedding_lookup(bind.word_emb, &word_ids)?;

    let mut char_feats = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let cids = vocab.char_ids(tok);
        let ce = tape.embedding_lookup(bind.char_emb, &cids)?;
        let windows = tape.unfold(ce, cfg.char_conv_width)?;
        let conv = tape.matmul(windows, bind.conv_w)?;
        let conv = tape.add(conv, bind.conv_b)?;
        let conv = tape.tanh(conv)?;
        char_feats.push(tape.col_max(conv)?);
    }
    let chars = tape.stack(&char_feats)?;
    let chars = tape.dropout(chars, cfg.dropout)?;

    let merged = tape.concat(1, &[words, chars])?;
    let proj = tape.matmul(merged, bind.proj_w)?;
    let mut x = tape.add(proj, bind.proj_b)?;
    for (wt, bt, wh, bh) in bind.hw {
        x = highway(tape, x, wt, bt, wh, bh)?;
    }
    tape.dropout(x, cfg.dropout)
}

/// Bidirectional LSTM over rows of `x`. Returns the per-position
/// concatenation `[K x 2*hidden]` and the concatenated final states
/// `[2*hidden]` (forward final, then backward final).
pub fn bilstm(
    tape: &mut Tape,
    fwd: &LstmParams,
    bwd: &LstmParams,
    x: VarId,
    hidden: usize,
) -> Result<(VarId, VarId), TensorError> {
    let len = tape.shape(x)[0];
    debug_assert!(len >= 1);
    let zero_h = tape.constant(Tensor::zeros(vec![hidden]));
    let zero_c = tape.constant(Tensor::zeros(vec![hidden]));

    let mut fwd_states = Vec::with_capacity(len);
    let (mut h, mut c) = (zero_h, zero_c);
    for k in 0..len {
        let xk = tape.row(x, k)?;
        let (nh, nc) = lstm_cell(tape, xk, h, c, fwd)?;
        h = nh;
        c = nc;
        fwd_states.push(h);
    }
    let fwd_final = h;

    let mut bwd_states = vec![zero_h; len];
    let (mut h, mut c) = (zero_h, zero_c);
    for k in (0..len).rev() {
        let xk = tape.row(x, k)?;
        let (nh, nc) = lstm_cell(tape, xk, h, c, bwd)?;
        h = nh;
        c = nc;
        bwd_states[k] = h;
    }
    let bwd_final = h;

    let fwd_mat = tape.stack(&fwd_states)?;
    let bwd_mat = tape.stack(&bwd_states)?;
    let out = tape.concat(1, &[fwd_mat, bwd_mat])?;
    let finals = tape.concat(0, &[fwd_final, bwd_final])?;
    Ok((out, finals))
}

/// Contextual encoding `[K x 2v]` plus final states for an embedded
/// sequence.
pub fn encode_sequence(
    tape: &mut Tape,
    bind: &EncoderBind,
    cfg: &EncoderConfig,
    embedded: VarId,
) -> Result<(VarId, VarId), TensorError> {
    let (h, finals) = bilstm(tape, &bind.lstm_fwd, &bind.lstm_bwd, embedded, cfg.v)?;
    let h = tape.dropout(h, cfg.dropout)?;
    Ok((h, finals))
}

/// Two-layer tanh self-attention summary: scalar logits
/// `tanh(w2 . tanh(W1 h_k + b1) + b2)` per word, softmax weights, weighted
/// average of the word vectors.
pub fn self_attention_summary(
    tape: &mut Tape,
    h: VarId,
    w1: VarId,
    b1: VarId,
    w2: VarId,
    b2: VarId,
) -> Result<(VarId, VarId), TensorError> {
    let a1 = tape.matmul(h, w1)?;
    let a1 = tape.add(a1, b1)?;
    let a1 = tape.tanh(a1)?;
    let logits = tape.matmul(a1, w2)?;
    let logits = tape.add(logits, b2)?;
    let logits = tape.tanh(logits)?;
    let weights = tape.softmax_last(logits)?;
    let summary = tape.matmul(weights, h)?;
    Ok((summary, weights))
}

/// Document summary vector per the configured mode.
pub fn summarize_document(
    tape: &mut Tape,
    bind: &EncoderBind,
    cfg: &EncoderConfig,
    h: VarId,
    finals: VarId,
) -> Result<VarId, TensorError> {
    match cfg.summary {
        SummaryMode::LastHiddenState => Ok(finals),
        SummaryMode::SelfAttention => {
            let (w1, b1, w2, b2) = bind.selfattn.expect("self-attention params registered");
            let (summary, _) = self_attention_summary(tape, h, w1, b1, w2, b2)?;
            Ok(summary)
        }
    }
}

/// Everything the downstream modules need for one instance.
pub struct EncodedInstance {
    /// Contextual matrices `[K_i x 2v]`, one per retained document.
    pub doc_h: Vec<VarId>,
    /// Summary vectors `[2v]`, aligned with `doc_h`.
    pub doc_p: Vec<VarId>,
    /// Summaries stacked into `[N x 2v]`.
    pub p_matrix: VarId,
    pub u_sub_mat: VarId,
    pub u_bod_mat: VarId,
    /// Final states of the subject / body encodings, `[2v]`.
    pub u_s: VarId,
    pub u_b: VarId,
    /// Candidate embeddings `[2v]`, one per candidate.
    pub candidates: Vec<VarId>,
    /// Original document index of each retained position.
    pub doc_positions: Vec<usize>,
}

impl EncodedInstance {
    /// Position within the retained subset for an original document index.
    pub fn position_of(&self, original_doc: usize) -> Option<usize> {
        self.doc_positions.iter().position(|&d| d == original_doc)
    }
}

/// Encode the retained documents, the query, and the candidates.
/// `subset` lists original document indices to retain, in retrieval order.
pub fn encode_instance(
    tape: &mut Tape,
    params: &ModelParams,
    cfg: &EncoderConfig,
    vocab: &Vocabulary,
    instance: &QueryInstance,
    subset: &[usize],
) -> Result<EncodedInstance, TensorError> {
    let bind = EncoderBind::bind(tape, params, cfg)?;

    let mut doc_h = Vec::with_capacity(subset.len());
    let mut doc_p = Vec::with_capacity(subset.len());
    for &d in subset {
        let emb = embed_words(tape, &bind, cfg, vocab, &instance.documents[d].tokens)?;
        let (h, finals) = encode_sequence(tape, &bind, cfg, emb)?;
        let p = summarize_document(tape, &bind, cfg, h, finals)?;
        doc_h.push(h);
        doc_p.push(p);
    }
    let p_matrix = tape.stack(&doc_p)?;

    let sub_emb = embed_words(tape, &bind, cfg, vocab, &instance.query_subject_tokens)?;
    let (u_sub_mat, u_s) = encode_sequence(tape, &bind, cfg, sub_emb)?;
    let bod_emb = embed_words(tape, &bind, cfg, vocab, &instance.query_body_tokens)?;
    let (u_bod_mat, u_b) = encode_sequence(tape, &bind, cfg, bod_emb)?;

    let mentions = locate_candidate_mentions(instance);
    let mut candidates = Vec::with_capacity(instance.num_candidates());
    for (l, cand) in instance.candidates.iter().enumerate() {
        let first_retained = mentions[l].iter().find_map(|m| {
            subset.iter().position(|&d| d == m.doc).map(|pos| (pos, m.start, m.end))
        });
        let emb = match first_retained {
            Some((pos, start, end)) => {
                let span = tape.slice(doc_h[pos], 0, start, end)?;
                let n = end - start;
                let w = tape.constant(Tensor::from_vec(vec![1.0 / n as f64; n]));
                tape.matmul(w, span)?
            }
            None => {
                // No mention among retained documents: average the
                // candidate's word vectors and project into context space.
                let ids = vocab.word_ids(cand);
                let rows = tape.embedding_lookup(bind.word_emb, &ids)?;
                let w = tape.constant(Tensor::from_vec(vec![1.0 / ids.len() as f64; ids.len()]));
                let avg = tape.matmul(w, rows)?;
                tape.matmul(bind.cand_proj, avg)?
            }
        };
        candidates.push(emb);
    }

    Ok(EncodedInstance {
        doc_h,
        doc_p,
        p_matrix,
        u_sub_mat,
        u_bod_mat,
        u_s,
        u_b,
        candidates,
        doc_positions: subset.to_vec(),
    })
}
