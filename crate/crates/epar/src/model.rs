//! Wires the encoder, Document Explorer, Answer Proposer, and Evidence
//! Assembler into one parameterized system with checkpointing and the
//! inference pipeline (including the ablation variants).

use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::assembler::{
    assemble_context, assemble_predict, bidaf_match, extract_key_sentences,
    register_assembler_params, register_reranker_params, rerank_baseline, vote_baseline,
    AssemblerBind, AssemblerConfig, KeySentence, RerankerBind, RerankerConfig, SentenceProvider,
    VoteMode,
};
use crate::corpus::{CorpusError, QueryInstance, Vocabulary};
use crate::encoder::{
    encode_instance, register_encoder_params, EncodedInstance, EncoderConfig, SummaryMode,
};
use crate::eval::softmax;
use crate::explorer::{
    build_tree, register_explorer_params, ExplorerBind, ExplorerConfig, ReasoningTree,
};
use crate::proposer::{
    propose, register_proposer_params, ApMode, ChainInput, ProposalResult, ProposerBind,
    ProposerConfig,
};
use crate::retrieval::two_hop_select;
use crate::tensor::{
    load_checkpoint, save_checkpoint, CheckpointError, ModelParams, Tape, TensorError,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("model io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model metadata error: {0}")]
    Meta(String),
}

/// Hyperparameters of the full system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub v: usize,
    pub char_dim: usize,
    pub char_conv_width: usize,
    pub char_filters: usize,
    pub summary: SummaryMode,
    pub self_attn_dim: usize,
    /// Answer Proposer decoder hidden size.
    pub ap_hidden: usize,
    /// Proposer ancestor-attention inner dimension.
    pub ap_attn_dim: usize,
    /// Evidence Assembler modeling BiLSTM hidden size.
    pub ea_hidden: usize,
    /// Hidden width of the beta similarity blocks.
    pub beta_hidden: usize,
    /// Explorer memory width override; `None` ties it to `2v`.
    pub de_memory_dim: Option<usize>,
    /// Chain length T.
    pub t_hops: usize,
    /// Reasoning-tree leaf budget.
    pub t_w: usize,
    /// TF-IDF pre-retrieval budget N'.
    pub n_prime: usize,
    pub dropout: f64,
    /// 2-hop TF-IDF pre-retrieval at inference (and for the training-time
    /// tree); disabled for the MedHop-style preset.
    pub use_tfidf: bool,
    /// First-hop weak supervision; disabled for the MedHop-style preset.
    pub hop1_supervision: bool,
}

impl ModelConfig {
    /// Full-size preset: 300-d embeddings, 100-d recurrent hidden size,
    /// self-attention summaries, 80-d proposer/assembler recurrences.
    pub fn full() -> Self {
        ModelConfig {
            d: 300,
            v: 100,
            char_dim: 8,
            char_conv_width: 5,
            char_filters: 150,
            summary: SummaryMode::SelfAttention,
            self_attn_dim: 200,
            ap_hidden: 80,
            ap_attn_dim: 80,
            ea_hidden: 80,
            beta_hidden: 200,
            de_memory_dim: None,
            t_hops: 3,
            t_w: 4,
            n_prime: 8,
            dropout: 0.2,
            use_tfidf: true,
            hop1_supervision: true,
        }
    }

    /// Small preset: last-hidden-state summaries and dimensions tied to
    /// `d`/`v` (defaults 100/20; pass other values for desk-scale runs).
    pub fn small(d: usize, v: usize) -> Self {
        ModelConfig {
            d,
            v,
            char_dim: 8,
            char_conv_width: 5,
            char_filters: (d / 2).max(1),
            summary: SummaryMode::LastHiddenState,
            self_attn_dim: 2 * v,
            ap_hidden: 2 * v,
            ap_attn_dim: 2 * v,
            ea_hidden: 2 * v,
            beta_hidden: 2 * v,
            de_memory_dim: None,
            t_hops: 3,
            t_w: 4,
            n_prime: 8,
            dropout: 0.2,
            use_tfidf: true,
            hop1_supervision: true,
        }
    }

    /// MedHop-style preset: small dimensions, no TF-IDF pre-retrieval, no
    /// first-hop supervision.
    pub fn medhop(d: usize, v: usize) -> Self {
        let mut cfg = Self::small(d, v);
        cfg.use_tfidf = false;
        cfg.hop1_supervision = false;
        cfg
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            d: self.d,
            v: self.v,
            char_dim: self.char_dim,
            char_conv_width: self.char_conv_width,
            char_filters: self.char_filters,
            summary: self.summary,
            self_attn_dim: self.self_attn_dim,
            dropout: self.dropout,
        }
    }

    pub fn explorer(&self) -> ExplorerConfig {
        ExplorerConfig {
            input_dim: 2 * self.v,
            memory_dim: self.de_memory_dim.unwrap_or(2 * self.v),
        }
    }

    pub fn proposer(&self) -> ProposerConfig {
        ProposerConfig {
            input_dim: 2 * self.v,
            hidden: self.ap_hidden,
            attn_dim: self.ap_attn_dim,
            beta_hidden: self.beta_hidden,
        }
    }

    pub fn assembler(&self) -> AssemblerConfig {
        AssemblerConfig { input_dim: 2 * self.v, hidden: self.ea_hidden, beta_hidden: self.beta_hidden }
    }

    pub fn reranker(&self) -> RerankerConfig {
        RerankerConfig { input_dim: 2 * self.v, beta_hidden: self.beta_hidden }
    }
}

/// Evaluation-time system variants (the ablation rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalVariant {
    /// TF-IDF + DE + AP + EA, proposed-sentence assembly.
    Full,
    /// Answer Proposer on the top-1 chain only, no assembler.
    SingleChain,
    AvgVote,
    MaxVote,
    /// Rerank chains, answer with the top chain's proposal.
    Reranker,
    /// Proposer without ancestor attention, rest of the pipeline intact.
    ApNoAttention,
    /// Assemble first sentences of tree documents instead of proposals.
    Lead1,
    /// Assemble every sentence of tree documents.
    FullDoc,
}

impl EvalVariant {
    pub fn name(&self) -> &'static str {
        match self {
            EvalVariant::Full => "assembler",
            EvalVariant::SingleChain => "single_chain",
            EvalVariant::AvgVote => "avg_vote",
            EvalVariant::MaxVote => "max_vote",
            EvalVariant::Reranker => "reranker",
            EvalVariant::ApNoAttention => "ap_wo_attn",
            EvalVariant::Lead1 => "lead1",
            EvalVariant::FullDoc => "full_doc",
        }
    }
}

pub struct Model {
    pub cfg: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    cfg: ModelConfig,
    vocab: Vocabulary,
    #[serde(default)]
    next_epoch: usize,
}

impl Model {
    /// Fresh parameters, deterministically initialized from `seed`.
    pub fn init(cfg: ModelConfig, vocab: Vocabulary, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new();
        register_encoder_params(&mut params, &mut rng, &cfg.encoder(), &vocab);
        register_explorer_params(&mut params, &mut rng, &cfg.explorer());
        register_proposer_params(&mut params, &mut rng, &cfg.proposer());
        register_assembler_params(&mut params, &mut rng, &cfg.assembler());
        register_reranker_params(&mut params, &mut rng, &cfg.reranker());
        Model { cfg, vocab, params }
    }

    pub fn checkpoint_paths(stem: &Path) -> (PathBuf, PathBuf) {
        (stem.with_extension("bin"), stem.with_extension("model.json"))
    }

    /// Write `stem.bin` (+ manifest) and `stem.model.json`.
    pub fn save(&self, stem: &Path, next_epoch: usize) -> Result<(), ModelError> {
        let (bin, meta) = Self::checkpoint_paths(stem);
        if let Some(parent) = bin.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        save_checkpoint(&self.params, &bin)?;
        let m = ModelMeta { cfg: self.cfg.clone(), vocab: self.vocab.clone(), next_epoch };
        fs::write(&meta, serde_json::to_string_pretty(&m).expect("serializable"))?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<(Self, usize), ModelError> {
        let (bin, meta) = Self::checkpoint_paths(stem);
        let params = load_checkpoint(&bin)?;
        let text = fs::read_to_string(&meta)?;
        let mut m: ModelMeta =
            serde_json::from_str(&text).map_err(|e| ModelError::Meta(e.to_string()))?;
        m.vocab.rebuild_index();
        Ok((Model { cfg: m.cfg, vocab: m.vocab, params }, m.next_epoch))
    }

    /// Documents retained at inference: 2-hop TF-IDF when enabled, all
    /// documents otherwise.
    pub fn retrieval_subset(&self, instance: &QueryInstance) -> Vec<usize> {
        if self.cfg.use_tfidf {
            two_hop_select(instance, self.cfg.n_prime)
        } else {
            (0..instance.num_docs()).collect()
        }
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        instance: &QueryInstance,
        subset: &[usize],
    ) -> Result<EncodedInstance, TensorError> {
        encode_instance(tape, &self.params, &self.cfg.encoder(), &self.vocab, instance, subset)
    }

    /// Tree + per-chain proposals over an encoded instance.
    pub fn explore_and_propose(
        &self,
        tape: &mut Tape,
        enc: &EncodedInstance,
        ap_mode: ApMode,
        pre_masked: Option<&[bool]>,
    ) -> Result<(ReasoningTree, Vec<ProposalResult>), TensorError> {
        let available = match pre_masked {
            Some(m) => m.iter().filter(|&&s| !s).count(),
            None => enc.doc_h.len(),
        };
        let t = self.cfg.t_hops.min(available);
        let de = ExplorerBind::bind(tape, &self.params)?;
        let tree = build_tree(tape, &de, enc, t, self.cfg.t_w, pre_masked)?;
        let ap = ProposerBind::bind(tape, &self.params)?;
        let ap_cfg = self.cfg.proposer();
        let mut proposals = Vec::with_capacity(tree.chains.len());
        for chain in &tree.chains {
            let input = ChainInput::from_chain(tape, enc, &chain.docs)?;
            proposals.push(propose(tape, &ap, &ap_cfg, enc, &input, ap_mode)?);
        }
        Ok((tree, proposals))
    }

    /// Full inference for one instance under a system variant.
    pub fn predict(&self, instance: &QueryInstance, variant: EvalVariant) -> Result<Prediction, ModelError> {
        let mut tape = Tape::new();
        let subset = self.retrieval_subset(instance);
        let enc = self.encode(&mut tape, instance, &subset)?;
        let ap_mode = if variant == EvalVariant::ApNoAttention {
            ApMode::NoAttention
        } else {
            ApMode::Full
        };
        let (tree, proposals) = self.explore_and_propose(&mut tape, &enc, ap_mode, None)?;

        // Rank chains by log probability (descending, stable).
        let mut order: Vec<usize> = (0..tree.chains.len()).collect();
        order.sort_by(|&a, &b| {
            tree.chains[b]
                .log_prob
                .partial_cmp(&tree.chains[a].log_prob)
                .expect("log probs comparable")
                .then(a.cmp(&b))
        });

        let chain_probs: Vec<Vec<f64>> =
            proposals.iter().map(|p| softmax(tape.data(p.scores))).collect();

        let provider = match variant {
            EvalVariant::Lead1 => SentenceProvider::Lead1,
            EvalVariant::FullDoc => SentenceProvider::FullDoc,
            _ => SentenceProvider::Proposed,
        };
        let sentences = extract_key_sentences(instance, &enc, &tree, &proposals, provider);
        let ea = AssemblerBind::bind(&mut tape, &self.params)?;
        let ctx = assemble_context(&mut tape, &enc, sentences)?;
        let (word_dist, pooled) = bidaf_match(
            &mut tape,
            &ea,
            &self.cfg.assembler(),
            ctx.h_prime,
            enc.u_sub_mat,
            enc.u_bod_mat,
        )?;
        let final_pred = assemble_predict(&mut tape, &ea, &enc, word_dist, pooled)?;

        let predicted = match variant {
            EvalVariant::Full | EvalVariant::Lead1 | EvalVariant::FullDoc | EvalVariant::ApNoAttention => {
                final_pred.predicted
            }
            EvalVariant::SingleChain => proposals[order[0]].proposed,
            EvalVariant::AvgVote => vote_baseline(&chain_probs, VoteMode::Average),
            EvalVariant::MaxVote => vote_baseline(&chain_probs, VoteMode::Max),
            EvalVariant::Reranker => {
                let rr = RerankerBind::bind(&mut tape, &self.params)?;
                let (pick, _) =
                    rerank_baseline(&mut tape, &rr, &self.cfg.reranker(), &enc, &tree, &proposals)?;
                pick
            }
        };

        // Trace data: per-hop top-5 selection probabilities per chain, and
        // the top-5 epsilon words per proposal.
        let mut chains_trace = Vec::new();
        for (rank, &ci) in order.iter().enumerate() {
            let chain = &tree.chains[ci];
            let docs: Vec<usize> = chain.original_docs(&enc);
            let mut hops = Vec::new();
            for chi in &chain.chi {
                let probs = tape.data(*chi);
                let mut top: Vec<(usize, f64)> = probs
                    .iter()
                    .enumerate()
                    .map(|(pos, &p)| (enc.doc_positions[pos], p))
                    .collect();
                top.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                top.truncate(5);
                hops.push(top);
            }
            let leaf = *chain.docs.last().unwrap();
            let leaf_doc = enc.doc_positions[leaf];
            let eps = tape.data(proposals[ci].epsilon);
            let mut top_words: Vec<(String, f64)> = eps
                .iter()
                .enumerate()
                .map(|(k, &p)| (instance.documents[leaf_doc].tokens[k].clone(), p))
                .collect();
            top_words.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            top_words.truncate(5);
            chains_trace.push(ChainTrace {
                rank,
                docs,
                log_prob: chain.log_prob,
                per_hop_top5: hops,
                proposed: proposals[ci].proposed,
                epsilon_top5: top_words,
            });
        }

        Ok(Prediction {
            predicted,
            variant,
            root: enc.doc_positions[tree.root],
            chains: chains_trace,
            chain_probs,
            key_sentences: ctx.sentences,
            final_scores: tape.data(final_pred.scores).to_vec(),
            retained_docs: subset,
        })
    }

    /// Trace JSON for one instance: the reasoning tree with per-hop top-5
    /// selection probabilities, per-chain proposals, and the assembled
    /// evidence with provenance.
    pub fn trace(&self, instance: &QueryInstance) -> Result<serde_json::Value, ModelError> {
        let pred = self.predict(instance, EvalVariant::Full)?;
        Ok(pred.to_trace_json(instance))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainTrace {
    pub rank: usize,
    /// Original document indices, root to leaf.
    pub docs: Vec<usize>,
    pub log_prob: f64,
    /// Per hop: top-5 `(original doc, probability)`.
    pub per_hop_top5: Vec<Vec<(usize, f64)>>,
    pub proposed: usize,
    pub epsilon_top5: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub predicted: usize,
    pub variant: EvalVariant,
    pub root: usize,
    /// Chains ranked by log probability.
    pub chains: Vec<ChainTrace>,
    /// Per chain (tree order): candidate probabilities from the proposer.
    pub chain_probs: Vec<Vec<f64>>,
    pub key_sentences: Vec<KeySentence>,
    pub final_scores: Vec<f64>,
    pub retained_docs: Vec<usize>,
}

impl Prediction {
    /// Ranked chain document sets for recall metrics.
    pub fn ranked_chain_docs(&self) -> Vec<Vec<usize>> {
        self.chains.iter().map(|c| c.docs.clone()).collect()
    }

    pub fn to_trace_json(&self, instance: &QueryInstance) -> serde_json::Value {
        let cand_text: Vec<String> =
            instance.candidates.iter().map(|c| c.join(" ")).collect();
        json!({
            "id": instance.instance_id,
            "root": self.root,
            "retained_docs": self.retained_docs,
            "chains": self.chains.iter().map(|c| json!({
                "rank": c.rank,
                "docs": c.docs,
                "log_prob": c.log_prob,
                "per_hop_top5": c.per_hop_top5,
                "proposed_candidate": cand_text[c.proposed],
                "epsilon_top5": c.epsilon_top5,
            })).collect::<Vec<_>>(),
            "assembled": {
                "sentences": self.key_sentences,
                "final_scores": self.final_scores,
            },
            "predicted_candidate": cand_text[self.predicted],
            "predicted_index": self.predicted,
        })
    }
}
