//! Evaluation metrics: accuracy with annotation-subset breakdowns,
//! chain-recovery recall@k, and answer-span recall@k over ranked
//! reasoning-tree paths or flat selector outputs.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::corpus::{Annotation, QueryInstance};

/// Plain softmax over a logit slice (an off-tape utility for pooling and
/// reports).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - mx).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SubsetAccuracy {
    pub correct: usize,
    pub total: usize,
}

impl SubsetAccuracy {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Exact-match accuracy over candidate indices. Instances with a missing
/// prediction count as wrong (with a warning); an empty filtered subset is
/// reported as absent rather than zero.
pub fn accuracy(
    predictions: &BTreeMap<String, usize>,
    instances: &[QueryInstance],
    subset: Option<Annotation>,
) -> Option<SubsetAccuracy> {
    let mut acc = SubsetAccuracy::default();
    for inst in instances {
        if let Some(filter) = subset {
            if inst.annotation != Some(filter) {
                continue;
            }
        }
        let Some(gold) = inst.answer_index else { continue };
        acc.total += 1;
        match predictions.get(&inst.instance_id) {
            Some(&p) if p == gold => acc.correct += 1,
            Some(_) => {}
            None => {
                eprintln!("warning: no prediction for instance {}", inst.instance_id);
            }
        }
    }
    if acc.total == 0 {
        None
    } else {
        Some(acc)
    }
}

/// Ranked document-set candidates for recall metrics: either ranked chains
/// from a reasoning tree, or a flat selector ordering whose top-k row is
/// the first `k + 1` documents.
#[derive(Debug, Clone)]
pub enum RankedPaths {
    Chains(Vec<Vec<usize>>),
    SelectorPrefix(Vec<usize>),
}

impl RankedPaths {
    /// Document sets visible at rank `k`.
    pub fn top_k_sets(&self, k: usize) -> Vec<BTreeSet<usize>> {
        match self {
            RankedPaths::Chains(chains) => {
                chains.iter().take(k).map(|c| c.iter().copied().collect()).collect()
            }
            RankedPaths::SelectorPrefix(order) => {
                vec![order.iter().take(k + 1).copied().collect()]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RecallResult {
    pub hits: usize,
    pub counted: usize,
    /// Instances without a gold chain, excluded from the rate.
    pub excluded: usize,
}

impl RecallResult {
    pub fn rate(&self) -> f64 {
        if self.counted == 0 {
            0.0
        } else {
            self.hits as f64 / self.counted as f64
        }
    }
}

/// Fraction of instances whose gold chain's document set is contained in
/// some top-k path (order-insensitive containment).
pub fn chain_recall_at_k(
    paths: &[RankedPaths],
    gold_chains: &[Option<Vec<usize>>],
    k: usize,
) -> RecallResult {
    assert_eq!(paths.len(), gold_chains.len());
    let mut result = RecallResult { hits: 0, counted: 0, excluded: 0 };
    for (p, gold) in paths.iter().zip(gold_chains) {
        let Some(gold) = gold else {
            result.excluded += 1;
            continue;
        };
        result.counted += 1;
        let gold_set: BTreeSet<usize> = gold.iter().copied().collect();
        if p.top_k_sets(k).iter().any(|set| gold_set.is_subset(set)) {
            result.hits += 1;
        }
    }
    result
}

/// Documents of an instance containing at least one exact mention of the
/// gold answer.
pub fn answer_bearing_docs(instance: &QueryInstance) -> BTreeSet<usize> {
    let Some(answer) = instance.answer_tokens() else {
        return BTreeSet::new();
    };
    let needle: Vec<String> = answer.iter().map(|t| t.to_lowercase()).collect();
    instance
        .documents
        .iter()
        .enumerate()
        .filter(|(_, d)| {
            d.tokens.len() >= needle.len()
                && d.tokens
                    .windows(needle.len())
                    .any(|w| w.iter().zip(&needle).all(|(a, b)| a.to_lowercase() == *b))
        })
        .map(|(i, _)| i)
        .collect()
}

/// Fraction of instances where some document in the top-k paths contains an
/// answer mention.
pub fn answer_span_recall_at_k(
    paths: &[RankedPaths],
    instances: &[QueryInstance],
    k: usize,
) -> RecallResult {
    assert_eq!(paths.len(), instances.len());
    let mut result = RecallResult { hits: 0, counted: 0, excluded: 0 };
    for (p, inst) in paths.iter().zip(instances) {
        let answer_docs = answer_bearing_docs(inst);
        if answer_docs.is_empty() && inst.answer_index.is_none() {
            result.excluded += 1;
            continue;
        }
        result.counted += 1;
        if p.top_k_sets(k).iter().any(|set| set.iter().any(|d| answer_docs.contains(d))) {
            result.hits += 1;
        }
    }
    result
}

/// Recall table rows keyed by selector name, rates indexed by k.
#[derive(Debug, Clone, Serialize)]
pub struct RecallTable {
    pub metric: String,
    pub ks: Vec<usize>,
    pub rows: BTreeMap<String, Vec<f64>>,
    pub counted: usize,
}

/// Full evaluation report for the `evaluate` command.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub overall: SubsetAccuracy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub follows_multiple: Option<SubsetAccuracy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub follows_single: Option<SubsetAccuracy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub not_follows: Option<SubsetAccuracy>,
}

impl EvalReport {
    pub fn build(predictions: &BTreeMap<String, usize>, instances: &[QueryInstance]) -> Option<Self> {
        let overall = accuracy(predictions, instances, None)?;
        Some(EvalReport {
            overall,
            follows_multiple: accuracy(predictions, instances, Some(Annotation::FollowsMultiple)),
            follows_single: accuracy(predictions, instances, Some(Annotation::FollowsSingle)),
            not_follows: accuracy(predictions, instances, Some(Annotation::NotFollows)),
        })
    }
}

/// Ablation accuracies keyed by variant name.
#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub rows: BTreeMap<String, f64>,
    pub total: usize,
}
