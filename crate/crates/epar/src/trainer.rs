//! Joint optimization of the Document Explorer, Answer Proposer, and
//! Evidence Assembler: weak-supervision target construction, the summed
//! cross-entropy loss, the epoch loop with Adam updates, checkpointing, and
//! configuration parsing.
//!
//! Weak supervision: the first hop is labeled with the document nearest the
//! query subject by TF-IDF; the last hop with a document containing an
//! answer mention (sampled uniformly when there are several). Instances
//! whose answer is mentioned nowhere skip the explorer's last-hop loss term
//! but still contribute proposer and assembler losses. During the
//! teacher-forced rollout, intermediate hops are sampled with the last-hop
//! label excluded so the forced final selection stays available.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::assembler::{
    assemble_context, assemble_predict, bidaf_match, extract_key_sentences, AssemblerBind,
    SentenceProvider,
};
use crate::corpus::{pad_row_fixups, QueryInstance};
use crate::eval::{accuracy, answer_bearing_docs};
use crate::explorer::{rollout_chain, ChainForcing, ExplorerBind, RolloutMode};
use crate::model::{EvalVariant, Model, ModelConfig, ModelError};
use crate::proposer::ApMode;
use crate::retrieval::{two_hop_select, TfidfIndex};
use crate::tensor::{adam_step, AdamState, Tape, TensorError, VarId};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite loss in term {term} (instance {instance})")]
    NonFiniteLoss { term: &'static str, instance: String },
    #[error("training diverged at epoch {epoch} step {step}; last checkpoint preserved")]
    Diverged { epoch: usize, step: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Training hyperparameters around a [`ModelConfig`].
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub grad_clip: f64,
    /// First epoch index; nonzero when resuming from a checkpoint.
    pub start_epoch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::small(100, 20),
            learning_rate: 0.001,
            batch_size: 10,
            epochs: 20,
            seed: 7,
            grad_clip: 5.0,
            start_epoch: 0,
        }
    }
}

impl TrainConfig {
    /// Parse a flat `key=value` config file. Unknown keys are an error so
    /// typos do not silently fall back to defaults.
    pub fn from_kv_file(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path)?;
        let mut cfg = TrainConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected key=value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        let bad = |e: String| TrainError::Config(e);
        let parse_usize =
            |v: &str| v.parse::<usize>().map_err(|_| bad(format!("invalid integer: {v}")));
        let parse_f64 = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("invalid float: {v}")));
        match key {
            "preset" => {
                self.model = match value {
                    "full" => ModelConfig::full(),
                    "small" => ModelConfig::small(100, 20),
                    "medhop" => ModelConfig::medhop(100, 20),
                    other => return Err(bad(format!("unknown preset: {other}"))),
                };
            }
            "d" => {
                let d = parse_usize(value)?;
                self.model.d = d;
                self.model.char_filters = (d / 2).max(1);
            }
            "v" => {
                let v = parse_usize(value)?;
                self.model.v = v;
                self.model.self_attn_dim = 2 * v;
                self.model.ap_hidden = 2 * v;
                self.model.ap_attn_dim = 2 * v;
                self.model.ea_hidden = 2 * v;
                self.model.beta_hidden = 2 * v;
            }
            "t" => self.model.t_hops = parse_usize(value)?,
            "t_w" => self.model.t_w = parse_usize(value)?,
            "n_prime" => self.model.n_prime = parse_usize(value)?,
            "dropout" => self.model.dropout = parse_f64(value)?,
            "learning_rate" | "lr" => self.learning_rate = parse_f64(value)?,
            "batch_size" => self.batch_size = parse_usize(value)?,
            "epochs" => self.epochs = parse_usize(value)?,
            "seed" => {
                self.seed =
                    value.parse::<u64>().map_err(|_| bad(format!("invalid seed: {value}")))?
            }
            "grad_clip" => self.grad_clip = parse_f64(value)?,
            other => return Err(bad(format!("unknown config key: {other}"))),
        }
        Ok(())
    }
}

/// Hop-level weak-supervision targets for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeakLabels {
    /// Document nearest the query subject by TF-IDF (absent when first-hop
    /// supervision is disabled).
    pub hop1: Option<usize>,
    /// An answer-bearing document, or `None` when the answer is mentioned
    /// nowhere (the explorer loss is skipped for this instance).
    pub hop_t: Option<usize>,
}

impl WeakLabels {
    pub fn has_hop1(&self) -> bool {
        self.hop1.is_some()
    }
}

fn instance_hash(id: &str) -> u64 {
    // FNV-1a; stable across runs and platforms.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn build_weak_labels(instance: &QueryInstance, seed: u64, hop1_supervision: bool) -> WeakLabels {
    let hop1 = if hop1_supervision {
        let index = TfidfIndex::build(instance);
        index.rank(&instance.query_subject_tokens).first().copied()
    } else {
        None
    };
    let answer_docs: Vec<usize> = answer_bearing_docs(instance).into_iter().collect();
    let hop_t = if answer_docs.is_empty() {
        None
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ instance_hash(&instance.instance_id));
        use rand::Rng;
        Some(answer_docs[rng.gen_range(0..answer_docs.len())])
    };
    WeakLabels { hop1, hop_t }
}

/// Cross entropy against a label, from a probability vector that is exact
/// on the tape (read unit distributions).
pub fn ce_from_probs(tape: &mut Tape, probs: VarId, label: usize) -> Result<VarId, TensorError> {
    let p = tape.slice(probs, 0, label, label + 1)?;
    let lp = tape.log(p)?;
    let s = tape.sum(lp)?;
    tape.affine(s, -1.0, 0.0)
}

/// Cross entropy against a label, from unnormalized score logits.
pub fn ce_from_logits(tape: &mut Tape, logits: VarId, label: usize) -> Result<VarId, TensorError> {
    let ls = tape.log_softmax_last(logits)?;
    let picked = tape.slice(ls, 0, label, label + 1)?;
    let s = tape.sum(picked)?;
    tape.affine(s, -1.0, 0.0)
}

/// Logged components of one instance's joint loss.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct LossBreakdown {
    pub de_hop1: Option<f64>,
    pub de_hop_t: Option<f64>,
    pub ap: f64,
    pub ea: f64,
    pub total: f64,
    /// Last-hop term skipped (answer unmentioned, or the label collided
    /// with the first-hop selection).
    pub hop_t_skipped: bool,
}

/// Joint loss for one training instance: explorer cross entropies from a
/// teacher-forced rollout over the full document set, proposer cross
/// entropy averaged over the reasoning-tree chains, and assembler cross
/// entropy over the assembled evidence. The tree is built with TF-IDF
/// pre-retrieval applied as a mask when enabled.
pub fn joint_loss(
    model: &Model,
    tape: &mut Tape,
    instance: &QueryInstance,
    labels: &WeakLabels,
    rollout_rng: &mut ChaCha8Rng,
    forced_chain: Option<&[usize]>,
) -> Result<(VarId, LossBreakdown), TrainError> {
    let answer = instance
        .answer_index
        .ok_or_else(|| TrainError::Config(format!("instance {} has no answer", instance.instance_id)))?;
    let n = instance.num_docs();
    let all_docs: Vec<usize> = (0..n).collect();
    let enc = model.encode(tape, instance, &all_docs)?;
    let de = ExplorerBind::bind(tape, &model.params)?;

    let t_eff = model.cfg.t_hops.min(n);
    // A hop-T label equal to the hop-1 label is unreachable after the first
    // selection; skip the term rather than force a repeat.
    let collision = t_eff > 1 && labels.hop_t.is_some() && labels.hop_t == labels.hop1;
    let effective_hop_t = if collision { None } else { labels.hop_t };

    let forcing = match forced_chain {
        Some(docs) => ChainForcing { hop1: None, hop_t: None, full: Some(docs.to_vec()) },
        None => ChainForcing { hop1: labels.hop1, hop_t: effective_hop_t, full: None },
    };
    let forbidden: Vec<usize> = effective_hop_t.into_iter().collect();
    let chain = rollout_chain(
        tape,
        &de,
        &enc,
        t_eff,
        RolloutMode::Sample,
        &forcing,
        Some(rollout_rng),
        &forbidden,
    )?;

    let mut breakdown = LossBreakdown { hop_t_skipped: effective_hop_t.is_none(), ..Default::default() };
    let mut terms: Vec<VarId> = Vec::new();

    let check = |tape: &Tape, v: VarId, term: &'static str| -> Result<f64, TrainError> {
        let x = tape.scalar(v);
        if !x.is_finite() {
            return Err(TrainError::NonFiniteLoss { term, instance: instance.instance_id.clone() });
        }
        Ok(x)
    };

    if let Some(hop1) = labels.hop1 {
        let ce = ce_from_probs(tape, chain.chi[0], hop1)?;
        breakdown.de_hop1 = Some(check(tape, ce, "explorer_hop1")?);
        terms.push(ce);
    }
    if let Some(hop_t) = effective_hop_t {
        let ce = ce_from_probs(tape, chain.chi[t_eff - 1], hop_t)?;
        breakdown.de_hop_t = Some(check(tape, ce, "explorer_hop_t")?);
        terms.push(ce);
    }

    // Reasoning tree for the proposer and assembler losses; TF-IDF
    // pre-retrieval enters as a pre-mask over the full encoding.
    let pre_mask: Option<Vec<bool>> = if model.cfg.use_tfidf && model.cfg.n_prime < n {
        let keep = two_hop_select(instance, model.cfg.n_prime);
        let mut masked = vec![true; n];
        for d in keep {
            masked[d] = false;
        }
        Some(masked)
    } else {
        None
    };
    let (tree, proposals) =
        model.explore_and_propose(tape, &enc, ApMode::Full, pre_mask.as_deref())?;

    let mut ap_terms = Vec::with_capacity(proposals.len());
    for prop in &proposals {
        ap_terms.push(ce_from_logits(tape, prop.scores, answer)?);
    }
    let ap_stack = tape.stack(&ap_terms)?;
    let ap_loss = tape.mean(ap_stack)?;
    breakdown.ap = check(tape, ap_loss, "proposer")?;
    terms.push(ap_loss);

    let sentences =
        extract_key_sentences(instance, &enc, &tree, &proposals, SentenceProvider::Proposed);
    let ea_bind = AssemblerBind::bind(tape, &model.params)?;
    let ctx = assemble_context(tape, &enc, sentences)?;
    let (word_dist, pooled) = bidaf_match(
        tape,
        &ea_bind,
        &model.cfg.assembler(),
        ctx.h_prime,
        enc.u_sub_mat,
        enc.u_bod_mat,
    )?;
    let final_pred = assemble_predict(tape, &ea_bind, &enc, word_dist, pooled)?;
    let ea_loss = ce_from_logits(tape, final_pred.scores, answer)?;
    breakdown.ea = check(tape, ea_loss, "assembler")?;
    terms.push(ea_loss);

    let mut total = terms[0];
    for t in &terms[1..] {
        total = tape.add(total, *t)?;
    }
    breakdown.total = check(tape, total, "total")?;
    Ok((total, breakdown))
}

#[derive(Debug, Clone, Serialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub de_hop1: f64,
    pub de_hop_t: f64,
    pub ap: f64,
    pub ea: f64,
    pub de_skips: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainSummary {
    pub step_losses: Vec<f64>,
    pub epoch_logs: Vec<EpochLog>,
    pub best_dev_accuracy: f64,
    pub best_epoch: usize,
    pub checkpoint: Option<PathBuf>,
}

fn epoch_seed(seed: u64, epoch: usize, salt: u64) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(salt)
}

/// Dev-set accuracy of the full system.
pub fn dev_accuracy(model: &Model, dev: &[QueryInstance]) -> Result<f64, ModelError> {
    let mut preds = BTreeMap::new();
    for inst in dev {
        let p = model.predict(inst, EvalVariant::Full)?;
        preds.insert(inst.instance_id.clone(), p.predicted);
    }
    Ok(accuracy(&preds, dev, None).map(|a| a.rate()).unwrap_or(0.0))
}

/// Run the training loop. Per-epoch RNG streams are derived from
/// `(seed, epoch)`, so training resumed from an epoch checkpoint follows
/// the identical schedule. The best-dev checkpoint is retained under
/// `out_stem` when given; a line-delimited JSON log goes to `log`.
pub fn train(
    model: &mut Model,
    train_data: &[QueryInstance],
    dev_data: &[QueryInstance],
    cfg: &TrainConfig,
    out_stem: Option<&Path>,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainSummary, TrainError> {
    let mut summary = TrainSummary::default();
    let mut adam = AdamState::new(cfg.learning_rate);
    let labels: Vec<WeakLabels> = train_data
        .iter()
        .map(|inst| build_weak_labels(inst, cfg.seed, model.cfg.hop1_supervision))
        .collect();

    for epoch in cfg.start_epoch..cfg.start_epoch + cfg.epochs {
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch, 0x9e3779b97f4a7c15));
        order.shuffle(&mut shuffle_rng);
        let mut rollout_rng =
            ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch, 0xc2b2ae3d27d4eb4f));
        let mut dropout_seed_rng =
            ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch, 0x165667b19e3779f9));

        let mut epoch_losses = Vec::new();
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            model.params.zero_grads();
            let mut batch_loss = 0.0;
            let (mut s_h1, mut s_ht, mut s_ap, mut s_ea) = (0.0, 0.0, 0.0, 0.0);
            let mut de_skips = 0usize;
            for &idx in batch {
                use rand::Rng;
                let mut tape = Tape::training(dropout_seed_rng.gen());
                let (loss, parts) = joint_loss(
                    model,
                    &mut tape,
                    &train_data[idx],
                    &labels[idx],
                    &mut rollout_rng,
                    None,
                )?;
                if !parts.total.is_finite() {
                    return Err(TrainError::Diverged { epoch, step });
                }
                tape.backward(loss)?;
                tape.accumulate_param_grads(&mut model.params, 1.0 / batch.len() as f64);
                batch_loss += parts.total / batch.len() as f64;
                s_h1 += parts.de_hop1.unwrap_or(0.0) / batch.len() as f64;
                s_ht += parts.de_hop_t.unwrap_or(0.0) / batch.len() as f64;
                s_ap += parts.ap / batch.len() as f64;
                s_ea += parts.ea / batch.len() as f64;
                if parts.hop_t_skipped {
                    de_skips += 1;
                }
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged { epoch, step });
            }
            model.params.clip_grad_global_norm(cfg.grad_clip);
            adam_step(&mut model.params, &mut adam)?;
            pad_row_fixups(&mut model.params);

            summary.step_losses.push(batch_loss);
            epoch_losses.push(batch_loss);
            if let Some(w) = log.as_deref_mut() {
                let line = StepLog {
                    epoch,
                    step,
                    loss: batch_loss,
                    de_hop1: s_h1,
                    de_hop_t: s_ht,
                    ap: s_ap,
                    ea: s_ea,
                    de_skips,
                };
                writeln!(w, "{}", serde_json::to_string(&line).expect("serializable"))?;
            }
        }

        let dev_acc = if dev_data.is_empty() { 0.0 } else { dev_accuracy(model, dev_data)? };
        let mean_loss = epoch_losses.iter().sum::<f64>() / epoch_losses.len().max(1) as f64;
        if let Some(w) = log.as_deref_mut() {
            let line = EpochLog { epoch, mean_loss, dev_accuracy: dev_acc };
            writeln!(w, "{}", serde_json::to_string(&line).expect("serializable"))?;
        }
        summary.epoch_logs.push(EpochLog { epoch, mean_loss, dev_accuracy: dev_acc });
        if dev_acc >= summary.best_dev_accuracy || summary.epoch_logs.len() == 1 {
            summary.best_dev_accuracy = dev_acc;
            summary.best_epoch = epoch;
            if let Some(stem) = out_stem {
                model.save(stem, epoch + 1)?;
                summary.checkpoint = Some(stem.to_path_buf());
            }
        }
    }
    Ok(summary)
}

/// Fine-tune only the reranker head on frozen trunk outputs: chains are
/// scored with a softmax cross entropy whose label is the first chain whose
/// proposal matches the gold answer (instances with no such chain are
/// skipped).
pub fn train_reranker_head(
    model: &mut Model,
    train_data: &[QueryInstance],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<usize, TrainError> {
    use crate::assembler::{rerank_chain_score, RerankerBind};
    let mut adam = AdamState::new(lr);
    let rr_names: Vec<String> = model
        .params
        .names()
        .filter(|n| n.starts_with("rr."))
        .cloned()
        .collect();
    let mut trained_on = 0usize;
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(seed, epoch, 0x27d4eb2f165667c5));
        order.shuffle(&mut rng);
        for idx in order {
            let inst = &train_data[idx];
            let Some(answer) = inst.answer_index else { continue };
            let mut tape = Tape::new();
            let subset = model.retrieval_subset(inst);
            let enc = model.encode(&mut tape, inst, &subset)?;
            let (tree, proposals) = model.explore_and_propose(&mut tape, &enc, ApMode::Full, None)?;
            let Some(label) = proposals.iter().position(|p| p.proposed == answer) else {
                continue;
            };
            if tree.chains.len() < 2 {
                continue;
            }
            let rr = RerankerBind::bind(&mut tape, &model.params)?;
            let rr_cfg = model.cfg.reranker();
            let mut scores = Vec::new();
            for (ci, chain) in tree.chains.iter().enumerate() {
                scores.push(rerank_chain_score(
                    &mut tape,
                    &rr,
                    &rr_cfg,
                    &enc,
                    &chain.docs,
                    &proposals[ci],
                )?);
            }
            let stacked = tape.stack(&scores)?;
            let loss = ce_from_logits(&mut tape, stacked, label)?;
            tape.backward(loss)?;
            // Only the reranker head moves; every other parameter gets an
            // explicit zero gradient for the optimizer contract.
            model.params.zero_grads();
            let mut head_grads: Vec<(String, Vec<f64>)> = Vec::new();
            {
                let mut scratch = model.params.clone();
                scratch.zero_grads();
                tape.accumulate_param_grads(&mut scratch, 1.0);
                for name in &rr_names {
                    if let Some(g) = scratch.get(name).and_then(|t| t.grad.clone()) {
                        head_grads.push((name.clone(), g));
                    }
                }
            }
            for (name, g) in head_grads {
                model.params.accumulate_grad(&name, &g, 1.0);
            }
            model.params.clip_grad_global_norm(5.0);
            adam_step(&mut model.params, &mut adam)?;
            trained_on += 1;
        }
    }
    Ok(trained_on)
}
