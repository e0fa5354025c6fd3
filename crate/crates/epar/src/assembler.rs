//! Evidence Assembler: extract one key sentence per reasoning chain,
//! concatenate them into a condensed context, run bidirectional attention
//! flow against the query, and score candidates for the final prediction.
//! Also hosts the average/max voting baselines and the chain reranker.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::QueryInstance;
use crate::encoder::{bilstm, EncodedInstance};
use crate::explorer::ReasoningTree;
use crate::proposer::{alpha, argmax_tiebreak_low, beta, AlphaParams, BetaParams, ProposalResult};
use crate::tensor::{LstmParams, ModelParams, Tape, TensorError, VarId};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssemblerConfig {
    /// Contextual dimension 2v.
    pub input_dim: usize,
    /// Modeling BiLSTM hidden size.
    pub hidden: usize,
    /// Hidden width of the beta scoring block.
    pub beta_hidden: usize,
}

pub fn register_assembler_params(
    params: &mut ModelParams,
    rng: &mut ChaCha8Rng,
    cfg: &AssemblerConfig,
) {
    params.add_xavier_vec(rng, "ea.w_sim", 3 * cfg.input_dim);
    LstmParams::register(params, rng, "ea.model_fwd", 4 * cfg.input_dim, cfg.hidden);
    LstmParams::register(params, rng, "ea.model_bwd", 4 * cfg.input_dim, cfg.hidden);
    params.add_xavier_vec(rng, "ea.out.w", 2 * cfg.hidden);
    params.add_zeros("ea.out.b", vec![]);
    BetaParams::register(params, rng, "ea.beta", cfg.input_dim, cfg.beta_hidden);
}

pub struct AssemblerBind {
    w_sim: VarId,
    model_fwd: LstmParams,
    model_bwd: LstmParams,
    out_w: VarId,
    out_b: VarId,
    beta: BetaParams,
}

impl AssemblerBind {
    pub fn bind(tape: &mut Tape, params: &ModelParams) -> Result<Self, TensorError> {
        Ok(AssemblerBind {
            w_sim: tape.param("ea.w_sim", params)?,
            model_fwd: LstmParams::bind(tape, params, "ea.model_fwd")?,
            model_bwd: LstmParams::bind(tape, params, "ea.model_bwd")?,
            out_w: tape.param("ea.out.w", params)?,
            out_b: tape.param("ea.out.b", params)?,
            beta: BetaParams::bind(tape, params, "ea.beta")?,
        })
    }
}

/// One selected sentence with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KeySentence {
    pub chain: usize,
    /// Original document index.
    pub doc: usize,
    pub sentence: usize,
    /// Token span within the document.
    pub span: (usize, usize),
    /// True when no sentence contained the proposed answer and the leaf's
    /// first sentence was used instead.
    pub fallback: bool,
}

/// Key sentences plus the concatenated context and token provenance.
pub struct AssembledContext {
    pub sentences: Vec<KeySentence>,
    /// `[K' x 2v]`; rows are the contextual vectors of the kept sentences.
    pub h_prime: VarId,
    /// Per-token `(chain, doc, sentence)` provenance, length `K'`.
    pub provenance: Vec<(usize, usize, usize)>,
}

/// Alternative sentence providers for the assembled context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentenceProvider {
    /// One sentence per chain containing that chain's proposed answer
    /// (leaf first, then ancestors), falling back to the leaf's first
    /// sentence.
    Proposed,
    /// First sentence of every document in the tree.
    Lead1,
    /// Every sentence of every document in the tree.
    FullDoc,
}

fn sentence_containing(doc: &crate::corpus::Document, needle: &[String]) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    for (s, &(start, end)) in doc.sentence_spans.iter().enumerate() {
        if end - start >= needle.len() {
            let window = &doc.tokens[start..end];
            if window.windows(needle.len()).any(|w| {
                w.iter().zip(needle).all(|(a, b)| a.to_lowercase() == b.to_lowercase())
            }) {
                return Some(s);
            }
        }
    }
    None
}

/// Pick key sentences for a tree. For every chain the proposed candidate's
/// sentence is searched in the leaf first, then in ancestors from the leaf
/// upward; duplicates (same document and sentence) are kept once.
pub fn extract_key_sentences(
    instance: &QueryInstance,
    enc: &EncodedInstance,
    tree: &ReasoningTree,
    proposals: &[ProposalResult],
    provider: SentenceProvider,
) -> Vec<KeySentence> {
    let mut chosen: Vec<KeySentence> = Vec::new();
    let push_unique = |ks: KeySentence, out: &mut Vec<KeySentence>| {
        if !out.iter().any(|existing| existing.doc == ks.doc && existing.sentence == ks.sentence) {
            out.push(ks);
        }
    };
    match provider {
        SentenceProvider::Proposed => {
            for (ci, chain) in tree.chains.iter().enumerate() {
                let prop = &proposals[ci];
                let needle = &instance.candidates[prop.proposed];
                let chain_orig = chain.original_docs(enc);
                let mut found = None;
                for &doc_id in chain_orig.iter().rev() {
                    if let Some(s) = sentence_containing(&instance.documents[doc_id], needle) {
                        found = Some((doc_id, s, false));
                        break;
                    }
                }
                let (doc_id, s, fallback) =
                    found.unwrap_or((*chain_orig.last().unwrap(), 0, true));
                let span = instance.documents[doc_id].sentence_spans[s];
                push_unique(
                    KeySentence { chain: ci, doc: doc_id, sentence: s, span, fallback },
                    &mut chosen,
                );
            }
        }
        SentenceProvider::Lead1 => {
            for (ci, chain) in tree.chains.iter().enumerate() {
                for doc_id in chain.original_docs(enc) {
                    let span = instance.documents[doc_id].sentence_spans[0];
                    push_unique(
                        KeySentence { chain: ci, doc: doc_id, sentence: 0, span, fallback: false },
                        &mut chosen,
                    );
                }
            }
        }
        SentenceProvider::FullDoc => {
            for (ci, chain) in tree.chains.iter().enumerate() {
                for doc_id in chain.original_docs(enc) {
                    for (s, &span) in instance.documents[doc_id].sentence_spans.iter().enumerate() {
                        push_unique(
                            KeySentence { chain: ci, doc: doc_id, sentence: s, span, fallback: false },
                            &mut chosen,
                        );
                    }
                }
            }
        }
    }
    chosen
}

/// Concatenate the contextual rows of the chosen sentences into `h'`.
pub fn assemble_context(
    tape: &mut Tape,
    enc: &EncodedInstance,
    sentences: Vec<KeySentence>,
) -> Result<AssembledContext, TensorError> {
    let mut parts = Vec::with_capacity(sentences.len());
    let mut provenance = Vec::new();
    for ks in &sentences {
        let pos = enc
            .position_of(ks.doc)
            .ok_or_else(|| TensorError::Contract(format!("document {} not encoded", ks.doc)))?;
        let rows = tape.slice(enc.doc_h[pos], 0, ks.span.0, ks.span.1)?;
        parts.push(rows);
        for _ in ks.span.0..ks.span.1 {
            provenance.push((ks.chain, ks.doc, ks.sentence));
        }
    }
    let h_prime = tape.concat(0, &parts)?;
    Ok(AssembledContext { sentences, h_prime, provenance })
}

/// Bidirectional attention flow between the condensed context and the
/// concatenated query, one modeling BiLSTM layer, then a linear layer and
/// softmax over context words. Returns the word distribution and the pooled
/// context vector.
pub fn bidaf_match(
    tape: &mut Tape,
    ea: &AssemblerBind,
    cfg: &AssemblerConfig,
    h_prime: VarId,
    u_sub_mat: VarId,
    u_bod_mat: VarId,
) -> Result<(VarId, VarId), TensorError> {
    let u = tape.concat(0, &[u_sub_mat, u_bod_mat])?;
    let dim = cfg.input_dim;
    // S_kj = w_sim . [h_k; u_j; h_k o u_j], decomposed into three terms.
    let w1 = tape.slice(ea.w_sim, 0, 0, dim)?;
    let w2 = tape.slice(ea.w_sim, 0, dim, 2 * dim)?;
    let w3 = tape.slice(ea.w_sim, 0, 2 * dim, 3 * dim)?;
    let h_w1 = tape.matmul(h_prime, w1)?;
    let u_w2 = tape.matmul(u, w2)?;
    let h_scaled = tape.mul(h_prime, w3)?;
    let u_t = tape.transpose(u)?;
    let cross = tape.matmul(h_scaled, u_t)?;
    let s = tape.add_col(cross, h_w1)?;
    let s = tape.add(s, u_w2)?;

    // Context-to-query attention.
    let a_c2q = tape.softmax_last(s)?;
    let h_q = tape.matmul(a_c2q, u)?;
    // Query-to-context attention: one distribution over context words.
    let col = tape.row_max(s)?;
    let b = tape.softmax_last(col)?;
    let h_c = tape.matmul(b, h_prime)?;

    let h_hq = tape.mul(h_prime, h_q)?;
    let h_hc = tape.mul(h_prime, h_c)?;
    let fused = tape.concat(1, &[h_prime, h_q, h_hq, h_hc])?;

    let (modeled, _) = bilstm(tape, &ea.model_fwd, &ea.model_bwd, fused, cfg.hidden)?;
    let logits = tape.matmul(modeled, ea.out_w)?;
    let logits = tape.add(logits, ea.out_b)?;
    let dist = tape.softmax_last(logits)?;
    let pooled = tape.matmul(dist, h_prime)?;
    Ok((dist, pooled))
}

/// Final prediction over candidates from the pooled assembled context.
pub struct FinalPrediction {
    pub word_dist: VarId,
    pub pooled: VarId,
    /// `[L]` score logits.
    pub scores: VarId,
    pub predicted: usize,
}

pub fn assemble_predict(
    tape: &mut Tape,
    ea: &AssemblerBind,
    enc: &EncodedInstance,
    word_dist: VarId,
    pooled: VarId,
) -> Result<FinalPrediction, TensorError> {
    if enc.candidates.is_empty() {
        return Err(TensorError::Contract("assemble_predict: no candidates".into()));
    }
    let mut scores = Vec::with_capacity(enc.candidates.len());
    for &c in &enc.candidates {
        scores.push(beta(tape, &ea.beta, c, pooled)?);
    }
    let scores = tape.stack(&scores)?;
    let predicted = argmax_tiebreak_low(tape.data(scores));
    Ok(FinalPrediction { word_dist, pooled, scores, predicted })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteMode {
    Average,
    Max,
}

/// Pool per-chain candidate probability vectors and take the argmax.
pub fn vote_baseline(per_chain_probs: &[Vec<f64>], mode: VoteMode) -> usize {
    assert!(!per_chain_probs.is_empty());
    let l = per_chain_probs[0].len();
    let mut pooled = vec![0.0; l];
    match mode {
        VoteMode::Average => {
            for probs in per_chain_probs {
                for (p, &v) in pooled.iter_mut().zip(probs) {
                    *p += v / per_chain_probs.len() as f64;
                }
            }
        }
        VoteMode::Max => {
            for probs in per_chain_probs {
                for (p, &v) in pooled.iter_mut().zip(probs) {
                    *p = p.max(v);
                }
            }
        }
    }
    argmax_tiebreak_low(&pooled)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RerankerConfig {
    pub input_dim: usize,
    pub beta_hidden: usize,
}

pub fn register_reranker_params(
    params: &mut ModelParams,
    rng: &mut ChaCha8Rng,
    cfg: &RerankerConfig,
) {
    params.add_xavier_vec(rng, "rr.w_sim", 3 * cfg.input_dim);
    // Fused leaf rows are [h; ctx; h o ctx; h o pooled] = 4 * input_dim wide.
    AlphaParams::register(params, rng, "rr.alpha", 4 * cfg.input_dim, cfg.input_dim);
    params.add_xavier(rng, "rr.proj", cfg.input_dim, 4 * cfg.input_dim);
    BetaParams::register(params, rng, "rr.beta", cfg.input_dim, cfg.beta_hidden);
}

pub struct RerankerBind {
    w_sim: VarId,
    alpha: AlphaParams,
    proj: VarId,
    beta: BetaParams,
}

impl RerankerBind {
    pub fn bind(tape: &mut Tape, params: &ModelParams) -> Result<Self, TensorError> {
        Ok(RerankerBind {
            w_sim: tape.param("rr.w_sim", params)?,
            alpha: AlphaParams::bind(tape, params, "rr.alpha")?,
            proj: tape.param("rr.proj", params)?,
            beta: BetaParams::bind(tape, params, "rr.beta")?,
        })
    }
}

/// Score one chain: bidirectional attention between the leaf and its
/// ancestors refines the leaf rows, alpha similarities to the query pool
/// them into one vector, and beta scores that vector against the chain's
/// proposed answer.
pub fn rerank_chain_score(
    tape: &mut Tape,
    rr: &RerankerBind,
    cfg: &RerankerConfig,
    enc: &EncodedInstance,
    chain_positions: &[usize],
    proposal: &ProposalResult,
) -> Result<VarId, TensorError> {
    let leaf = enc.doc_h[*chain_positions.last().expect("chain non-empty")];
    let dim = cfg.input_dim;
    let fused = if chain_positions.len() > 1 {
        let parts: Vec<VarId> =
            chain_positions[..chain_positions.len() - 1].iter().map(|&d| enc.doc_h[d]).collect();
        let anc = tape.concat(0, &parts)?;
        let w1 = tape.slice(rr.w_sim, 0, 0, dim)?;
        let w2 = tape.slice(rr.w_sim, 0, dim, 2 * dim)?;
        let w3 = tape.slice(rr.w_sim, 0, 2 * dim, 3 * dim)?;
        let h_w1 = tape.matmul(leaf, w1)?;
        let a_w2 = tape.matmul(anc, w2)?;
        let h_scaled = tape.mul(leaf, w3)?;
        let anc_t = tape.transpose(anc)?;
        let cross = tape.matmul(h_scaled, anc_t)?;
        let s = tape.add_col(cross, h_w1)?;
        let s = tape.add(s, a_w2)?;
        let a_l2a = tape.softmax_last(s)?;
        let ctx = tape.matmul(a_l2a, anc)?;
        let col = tape.row_max(s)?;
        let b = tape.softmax_last(col)?;
        let pooled_leaf = tape.matmul(b, leaf)?;
        let h_ctx = tape.mul(leaf, ctx)?;
        let h_pooled = tape.mul(leaf, pooled_leaf)?;
        tape.concat(1, &[leaf, ctx, h_ctx, h_pooled])?
    } else {
        let zeros = tape.affine(leaf, 0.0, 0.0)?;
        tape.concat(1, &[leaf, zeros, zeros, zeros])?
    };

    // Alpha-weighted average of the refined rows against both query finals.
    let k = tape.shape(fused)[0];
    let mut logits = Vec::with_capacity(k);
    for step in 0..k {
        let row = tape.row(fused, step)?;
        let a_s = alpha(tape, &rr.alpha, row, enc.u_s)?;
        let a_b = alpha(tape, &rr.alpha, row, enc.u_b)?;
        logits.push(tape.add(a_s, a_b)?);
    }
    let w = tape.stack(&logits)?;
    let weights = tape.softmax_last(w)?;
    let pooled = tape.matmul(weights, fused)?;
    let pooled = tape.matmul(rr.proj, pooled)?;
    beta(tape, &rr.beta, enc.candidates[proposal.proposed], pooled)
}

/// Rerank all chains and return the proposal of the top-scoring one.
pub fn rerank_baseline(
    tape: &mut Tape,
    rr: &RerankerBind,
    cfg: &RerankerConfig,
    enc: &EncodedInstance,
    tree: &ReasoningTree,
    proposals: &[ProposalResult],
) -> Result<(usize, Vec<f64>), TensorError> {
    let mut scores = Vec::with_capacity(tree.chains.len());
    for (ci, chain) in tree.chains.iter().enumerate() {
        let s = rerank_chain_score(tape, rr, cfg, enc, &chain.docs, &proposals[ci])?;
        scores.push(tape.scalar(s));
    }
    let top = argmax_tiebreak_low(&scores);
    Ok((proposals[top].proposed, scores))
}
