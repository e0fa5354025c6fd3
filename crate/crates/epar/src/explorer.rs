//! Document Explorer: a hierarchical memory network that iteratively reads
//! document summaries, writes word-level evidence into a recurrent memory,
//! and selects non-repeating documents for T hops.
//!
//! The read unit scores every unselected document with a bilinear form
//! against the memory and samples (or greedily picks) the next document;
//! the write unit attends over the selected document's words and feeds the
//! weighted average into a GRU memory update. Rolling out several times
//! from a shared root yields a reasoning tree.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::EncodedInstance;
use crate::tensor::{gru_cell, GruParams, ModelParams, Tape, TensorError, VarId};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplorerConfig {
    /// Contextual dimension 2v of document summaries and words.
    pub input_dim: usize,
    /// Memory width; defaults to the summary dimension so the memory can be
    /// initialized from the query-subject final state directly.
    pub memory_dim: usize,
}

use serde::{Deserialize, Serialize};

pub fn register_explorer_params(
    params: &mut ModelParams,
    rng: &mut ChaCha8Rng,
    cfg: &ExplorerConfig,
) {
    params.add_xavier(rng, "de.w_read", cfg.input_dim, cfg.memory_dim);
    params.add_xavier(rng, "de.w_write", cfg.input_dim, cfg.memory_dim);
    GruParams::register(params, rng, "de.gru", cfg.input_dim, cfg.memory_dim);
    if cfg.memory_dim != cfg.input_dim {
        params.add_xavier(rng, "de.m0_proj", cfg.memory_dim, cfg.input_dim);
    }
}

pub struct ExplorerBind {
    w_read: VarId,
    w_write: VarId,
    gru: GruParams,
    m0_proj: Option<VarId>,
}

impl ExplorerBind {
    pub fn bind(tape: &mut Tape, params: &ModelParams) -> Result<Self, TensorError> {
        let m0_proj =
            if params.contains("de.m0_proj") { Some(tape.param("de.m0_proj", params)?) } else { None };
        Ok(ExplorerBind {
            w_read: tape.param("de.w_read", params)?,
            w_write: tape.param("de.w_write", params)?,
            gru: GruParams::bind(tape, params, "de.gru")?,
            m0_proj,
        })
    }

    /// Initial memory: the query-subject final state (projected when the
    /// memory width is overridden).
    pub fn initial_memory(&self, tape: &mut Tape, u_s: VarId) -> Result<VarId, TensorError> {
        match self.m0_proj {
            Some(w) => tape.matmul(w, u_s),
            None => Ok(u_s),
        }
    }
}

/// Memory state during a rollout: current GRU hidden, hop counter, and the
/// selected-document mask.
pub struct MemoryState {
    pub m: VarId,
    pub hop: usize,
    /// `true` once a document has been selected (masked from re-selection).
    pub selected: Vec<bool>,
}

impl MemoryState {
    pub fn fresh(m0: VarId, num_docs: usize) -> Self {
        MemoryState { m: m0, hop: 0, selected: vec![false; num_docs] }
    }
}

/// Selection distribution over documents: bilinear logits
/// `x_n = p_n^T W_r m` with already-selected documents masked to
/// probability exactly zero.
pub fn read_unit(
    tape: &mut Tape,
    de: &ExplorerBind,
    m: VarId,
    p_matrix: VarId,
    selected: &[bool],
) -> Result<VarId, TensorError> {
    if selected.iter().all(|&s| s) {
        return Err(TensorError::Contract("read_unit: every document is already selected".into()));
    }
    let wm = tape.matmul(de.w_read, m)?;
    let logits = tape.matmul(p_matrix, wm)?;
    let unselected: Vec<bool> = selected.iter().map(|&s| !s).collect();
    tape.softmax_masked(logits, &unselected)
}

/// Memory update from the selected document's words `[K x 2v]`: attention
/// weights `omega = softmax(h_k^T W_w m)`, weighted average into the GRU.
/// Returns the next memory and the word-attention distribution.
pub fn write_unit(
    tape: &mut Tape,
    de: &ExplorerBind,
    m: VarId,
    h_doc: VarId,
) -> Result<(VarId, VarId), TensorError> {
    let wm = tape.matmul(de.w_write, m)?;
    let w = tape.matmul(h_doc, wm)?;
    let omega = tape.softmax_last(w)?;
    let h_avg = tape.matmul(omega, h_doc)?;
    let m_next = gru_cell(tape, h_avg, m, &de.gru)?;
    Ok((m_next, omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    /// Sample each hop from the selection distribution (training).
    Sample,
    /// Pick the argmax at each hop (inference); deterministic.
    Greedy,
}

/// Teacher-forcing overrides. A forced hop still records its distribution
/// so the loss can be computed against it.
#[derive(Debug, Clone, Default)]
pub struct ChainForcing {
    pub hop1: Option<usize>,
    pub hop_t: Option<usize>,
    /// Force every hop (used by gradient checks to freeze sampling).
    pub full: Option<Vec<usize>>,
}

/// One root-to-leaf reasoning chain: selected positions (within the encoded
/// subset), the per-hop selection distributions, and the summed log
/// probability of the selected path.
#[derive(Debug, Clone)]
pub struct ReasoningChain {
    pub docs: Vec<usize>,
    pub chi: Vec<VarId>,
    pub log_prob: f64,
}

impl ReasoningChain {
    /// Chain positions mapped back to original document indices.
    pub fn original_docs(&self, enc: &EncodedInstance) -> Vec<usize> {
        self.docs.iter().map(|&p| enc.doc_positions[p]).collect()
    }
}

fn pick(
    tape: &Tape,
    chi: VarId,
    mode: RolloutMode,
    rng: Option<&mut ChaCha8Rng>,
) -> usize {
    let probs = tape.data(chi);
    match mode {
        RolloutMode::Greedy => {
            let mut best = 0;
            let mut best_p = f64::NEG_INFINITY;
            for (i, &p) in probs.iter().enumerate() {
                if p > best_p {
                    best_p = p;
                    best = i;
                }
            }
            best
        }
        RolloutMode::Sample => {
            let rng = rng.expect("sampling mode needs an rng");
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last_positive = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    last_positive = i;
                    acc += p;
                    if u < acc {
                        return i;
                    }
                }
            }
            last_positive
        }
    }
}

/// Unroll the explorer for `T` hops over the encoded documents, masking
/// each selection. `forbidden` positions are excluded from *sampled* picks
/// (they stay available to forcing and to the distributions themselves).
pub fn rollout_chain(
    tape: &mut Tape,
    de: &ExplorerBind,
    enc: &EncodedInstance,
    t_hops: usize,
    mode: RolloutMode,
    forcing: &ChainForcing,
    mut rng: Option<&mut ChaCha8Rng>,
    forbidden_for_sampling: &[usize],
) -> Result<ReasoningChain, TensorError> {
    let n = enc.doc_h.len();
    if t_hops > n {
        return Err(TensorError::Contract(format!(
            "rollout of {t_hops} hops over only {n} documents"
        )));
    }
    let m0 = de.initial_memory(tape, enc.u_s)?;
    let mut state = MemoryState::fresh(m0, n);
    let mut chain = ReasoningChain { docs: Vec::with_capacity(t_hops), chi: Vec::new(), log_prob: 0.0 };

    for hop in 0..t_hops {
        let chi = read_unit(tape, de, state.m, enc.p_matrix, &state.selected)?;
        let forced = if let Some(full) = &forcing.full {
            Some(full[hop])
        } else if hop == 0 {
            forcing.hop1
        } else if hop == t_hops - 1 {
            forcing.hop_t
        } else {
            None
        };
        let choice = match forced {
            Some(doc) => doc,
            None => {
                if mode == RolloutMode::Sample && !forbidden_for_sampling.is_empty() {
                    let probs = tape.data(chi);
                    let allowed: Vec<usize> = (0..n)
                        .filter(|i| {
                            !state.selected[*i] && !forbidden_for_sampling.contains(i) && probs[*i] > 0.0
                        })
                        .collect();
                    if allowed.is_empty() {
                        pick(tape, chi, mode, rng.as_deref_mut())
                    } else {
                        // Renormalized sample over the allowed set.
                        let probs = tape.data(chi);
                        let total: f64 = allowed.iter().map(|&i| probs[i]).sum();
                        let u: f64 = rng.as_deref_mut().expect("rng").gen::<f64>() * total;
                        let mut acc = 0.0;
                        let mut chosen = *allowed.last().unwrap();
                        for &i in &allowed {
                            acc += probs[i];
                            if u < acc {
                                chosen = i;
                                break;
                            }
                        }
                        chosen
                    }
                } else {
                    pick(tape, chi, mode, rng.as_deref_mut())
                }
            }
        };
        if choice >= n {
            return Err(TensorError::Contract(format!("forced document {choice} out of range")));
        }
        if state.selected[choice] {
            return Err(TensorError::Contract(format!(
                "document {choice} selected twice in one chain"
            )));
        }
        let p_choice = tape.data(chi)[choice];
        chain.log_prob += if p_choice > 0.0 { p_choice.ln() } else { f64::NEG_INFINITY };
        chain.docs.push(choice);
        chain.chi.push(chi);
        state.selected[choice] = true;
        state.hop = hop + 1;
        if hop + 1 < t_hops {
            state.m = write_unit(tape, de, state.m, enc.doc_h[choice])?.0;
        }
    }
    Ok(chain)
}

/// Reasoning tree: a shared greedy root, branches over the top `t_w`
/// second-hop documents, greedy selection afterwards. Duplicate chains are
/// removed (branch choices already make them distinct in practice).
#[derive(Debug, Clone)]
pub struct ReasoningTree {
    pub root: usize,
    pub chains: Vec<ReasoningChain>,
}

pub fn build_tree(
    tape: &mut Tape,
    de: &ExplorerBind,
    enc: &EncodedInstance,
    t_hops: usize,
    t_w: usize,
    pre_masked: Option<&[bool]>,
) -> Result<ReasoningTree, TensorError> {
    assert!(t_w >= 1, "tree needs at least one leaf");
    let n = enc.doc_h.len();
    let selected0 = match pre_masked {
        Some(mask) => mask.to_vec(),
        None => vec![false; n],
    };
    let available = selected0.iter().filter(|&&s| !s).count();
    if t_hops > available {
        return Err(TensorError::Contract(format!(
            "tree of {t_hops}-hop chains over only {available} unmasked documents"
        )));
    }
    let m0 = de.initial_memory(tape, enc.u_s)?;
    let chi1 = read_unit(tape, de, m0, enc.p_matrix, &selected0)?;
    let root = pick(tape, chi1, RolloutMode::Greedy, None);
    let root_logp = tape.data(chi1)[root].ln();

    if t_hops == 1 {
        return Ok(ReasoningTree {
            root,
            chains: vec![ReasoningChain { docs: vec![root], chi: vec![chi1], log_prob: root_logp }],
        });
    }

    let (m1, _) = write_unit(tape, de, m0, enc.doc_h[root])?;
    let mut selected1 = selected0;
    selected1[root] = true;
    let chi2 = read_unit(tape, de, m1, enc.p_matrix, &selected1)?;
    let probs2 = tape.data(chi2).to_vec();
    let mut branch_order: Vec<usize> =
        (0..n).filter(|&i| !selected1[i]).collect();
    branch_order.sort_by(|&a, &b| probs2[b].partial_cmp(&probs2[a]).unwrap().then(a.cmp(&b)));
    branch_order.truncate(t_w);

    let mut chains = Vec::with_capacity(branch_order.len());
    for &branch in &branch_order {
        let mut docs = vec![root, branch];
        let mut chi = vec![chi1, chi2];
        let mut log_prob = root_logp + probs2[branch].ln();
        let mut selected = selected1.clone();
        selected[branch] = true;
        let mut m = write_unit(tape, de, m1, enc.doc_h[branch])?.0;
        for _hop in 2..t_hops {
            let chi_t = read_unit(tape, de, m, enc.p_matrix, &selected)?;
            let choice = pick(tape, chi_t, RolloutMode::Greedy, None);
            log_prob += tape.data(chi_t)[choice].ln();
            docs.push(choice);
            chi.push(chi_t);
            selected[choice] = true;
            if _hop + 1 < t_hops {
                m = write_unit(tape, de, m, enc.doc_h[choice])?.0;
            }
        }
        if !chains.iter().any(|c: &ReasoningChain| c.docs == docs) {
            chains.push(ReasoningChain { docs, chi, log_prob });
        }
    }
    Ok(ReasoningTree { root, chains })
}
