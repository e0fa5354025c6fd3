//! Synthetic multi-hop chain datasets.
//!
//! Every instance hides a relation chain `subject -> e1 -> ... -> answer`,
//! one link per gold document, written as templated sentences. A distractor
//! chain of the same shape leads to a wrong candidate under the same
//! relation, and a branch document links the last gold intermediate to
//! another wrong candidate, so single-document relation matching cannot
//! shortcut the task. Output uses the QAngaroo wire format plus a gold-chain
//! sidecar `{id: [doc indices]}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::qangaroo::{save_qangaroo, Annotation};
use super::{parse_query, tokenize, CorpusError, Document, QueryInstance};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub instances: usize,
    /// Intermediate links; a gold chain spans `hops + 1` documents.
    pub hops: usize,
    /// Total word budget across templates, relations, fillers, entities.
    pub vocab_size: usize,
    pub docs_per_instance: usize,
    pub candidates: usize,
    pub distractor_chains: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            instances: 200,
            hops: 2,
            vocab_size: 200,
            docs_per_instance: 8,
            candidates: 5,
            distractor_chains: 1,
            seed: 7,
        }
    }
}

const TEMPLATE_WORDS: &[&str] = &[
    "the", "story", "mentions", "is", "linked", "to", "record", "notes", "this", "covers",
    "archive", "item", "about", ".",
];
const RELATION_WORDS: &[&str] = &["rela", "relb", "relc", "reld"];
const FILLER_COUNT: usize = 24;
const CONSONANTS: &[char] = &[
    'b', 'd', 'f', 'g', 'h', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z',
];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

/// Pronounceable, pairwise-distinct entity name: CVCVC, spread over the
/// space by a multiplicative stride so nearby indices do not share
/// prefixes.
fn entity_name(i: usize) -> String {
    let space = CONSONANTS.len() * VOWELS.len() * CONSONANTS.len() * VOWELS.len() * CONSONANTS.len();
    let mut x = (i * 2654435761) % space;
    let mut name = String::with_capacity(5);
    for pos in 0..5 {
        if pos % 2 == 0 {
            name.push(CONSONANTS[x % CONSONANTS.len()]);
            x /= CONSONANTS.len();
        } else {
            name.push(VOWELS[x % VOWELS.len()]);
            x /= VOWELS.len();
        }
    }
    name
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.instances == 0 {
            return Err(CorpusError::Spec("instances must be positive".into()));
        }
        if self.hops == 0 {
            return Err(CorpusError::Spec("hops must be at least 1".into()));
        }
        if self.hops + 1 > self.docs_per_instance {
            return Err(CorpusError::Spec(format!(
                "hops+1 = {} exceeds documents per instance = {}",
                self.hops + 1,
                self.docs_per_instance
            )));
        }
        if self.candidates < 2 {
            return Err(CorpusError::Spec("need at least 2 candidates".into()));
        }
        if self.entity_pool_size() < self.entities_needed_per_instance() {
            return Err(CorpusError::Spec(format!(
                "vocab size {} leaves only {} entity words, need {} per instance",
                self.vocab_size,
                self.entity_pool_size(),
                self.entities_needed_per_instance()
            )));
        }
        Ok(())
    }

    fn entity_pool_size(&self) -> usize {
        self.vocab_size
            .saturating_sub(TEMPLATE_WORDS.len() + RELATION_WORDS.len() + FILLER_COUNT)
    }

    fn entities_needed_per_instance(&self) -> usize {
        1 + self.hops + self.candidates + self.distractor_chains * (1 + self.hops)
    }
}

/// Gold document chains keyed by instance id, in chain order.
pub type GoldChains = BTreeMap<String, Vec<usize>>;

#[derive(Debug)]
pub struct SyntheticDataset {
    pub instances: Vec<QueryInstance>,
    pub gold_chains: GoldChains,
    pub annotations: BTreeMap<String, Annotation>,
    rows: Vec<(String, String, Vec<String>, Option<String>, Vec<String>)>,
}

impl SyntheticDataset {
    /// Write the dataset JSON plus `<stem>.chains.json` and
    /// `<stem>.annotations.json` sidecars.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        save_qangaroo(path, &self.rows)?;
        let chains = serde_json::to_string_pretty(&self.gold_chains).expect("serializable");
        fs::write(sidecar(path, "chains"), chains)
            .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: e })?;
        let ann = serde_json::to_string_pretty(&self.annotations).expect("serializable");
        fs::write(sidecar(path, "annotations"), ann)
            .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: e })?;
        Ok(())
    }
}

pub fn sidecar(dataset: &Path, kind: &str) -> PathBuf {
    let stem = dataset.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
    dataset.with_file_name(format!("{stem}.{kind}.json"))
}

struct WordPools {
    entities: Vec<String>,
    fillers: Vec<String>,
}

fn build_pools(spec: &SyntheticSpec) -> WordPools {
    let entities = (0..spec.entity_pool_size()).map(entity_name).collect();
    let fillers = (0..FILLER_COUNT).map(|i| format!("fill{i:02}")).collect();
    WordPools { entities, fillers }
}

fn sentence(parts: &[&str]) -> String {
    parts.join(" ")
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset, CorpusError> {
    spec.validate()?;
    let pools = build_pools(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(spec.instances);
    let mut gold_chains = GoldChains::new();
    let mut annotations = BTreeMap::new();
    let mut instances = Vec::with_capacity(spec.instances);

    for i in 0..spec.instances {
        let id = format!("syn_{i:05}");
        let rel_idx = rng.gen_range(0..RELATION_WORDS.len());
        let rel = RELATION_WORDS[rel_idx];

        // Entities drawn without replacement for this instance.
        let mut pool_idx: Vec<usize> = (0..pools.entities.len()).collect();
        pool_idx.shuffle(&mut rng);
        let mut draw = pool_idx.into_iter();
        let mut next_entity = || pools.entities[draw.next().expect("validated pool size")].clone();

        let subject = next_entity();
        let gold_mids: Vec<String> = (0..spec.hops).map(|_| next_entity()).collect();
        let answer = next_entity();
        let wrongs: Vec<String> = (0..spec.candidates - 1).map(|_| next_entity()).collect();

        let filler = |rng: &mut ChaCha8Rng| pools.fillers[rng.gen_range(0..FILLER_COUNT)].clone();

        let intro = |rng: &mut ChaCha8Rng| {
            sentence(&["this", "record", "covers", &filler(rng), "."])
        };
        // The bridging entity is echoed once more in each link document,
        // which keeps document summaries and memory writes anchored on it.
        let generic_link = |src: &str, dst: &str| {
            format!(
                "{} {}",
                sentence(&["the", "story", "notes", src, "is", "linked", "to", dst, "."]),
                sentence(&["the", "item", "about", dst, "."])
            )
        };
        let rel_link = |src: &str, r: &str, dst: &str| {
            format!(
                "{} {}",
                sentence(&["the", "item", "about", src, "."]),
                sentence(&["the", "record", "mentions", src, r, "of", dst, "."])
            )
        };
        let filler_sent = |rng: &mut ChaCha8Rng| {
            sentence(&["the", "archive", "item", "about", &filler(rng), "."])
        };
        // Final-link documents carry an uninformative lead sentence (so
        // first-sentence heuristics stay weak); intermediate link documents
        // are single sentences, keeping memory writes entity-dense.
        let final_doc = |rng: &mut ChaCha8Rng, link: String| format!("{} {}", intro(rng), link);

        // Gold chain documents, in chain order.
        let mut gold_docs: Vec<String> = Vec::with_capacity(spec.hops + 1);
        let gold_path: Vec<&String> =
            std::iter::once(&subject).chain(gold_mids.iter()).collect();
        for l in 0..spec.hops {
            gold_docs.push(generic_link(gold_path[l], gold_path[l + 1]));
        }
        let link = rel_link(&gold_mids[spec.hops - 1], rel, &answer);
        gold_docs.push(final_doc(&mut rng, link));

        let mut other_docs: Vec<String> = Vec::new();
        let budget = spec.docs_per_instance - gold_docs.len();
        let mut wrong_cursor = 0usize;
        let take_wrong = |cursor: &mut usize| {
            let w = wrongs[*cursor % wrongs.len()].clone();
            *cursor += 1;
            w
        };

        // Whole distractor chains of the same shape as the gold chain,
        // ending in a wrong candidate under a different relation.
        let chain_len = spec.hops + 1;
        for chain_no in 0..spec.distractor_chains {
            if other_docs.len() + chain_len > budget {
                break;
            }
            let d_start = next_entity();
            let d_mids: Vec<String> = (0..spec.hops).map(|_| next_entity()).collect();
            let d_target = take_wrong(&mut wrong_cursor);
            let d_rel = RELATION_WORDS[(rel_idx + 1 + chain_no) % RELATION_WORDS.len()];
            let d_path: Vec<&String> = std::iter::once(&d_start).chain(d_mids.iter()).collect();
            for l in 0..spec.hops {
                other_docs.push(generic_link(d_path[l], d_path[l + 1]));
            }
            let link = rel_link(&d_mids[spec.hops - 1], d_rel, &d_target);
            other_docs.push(final_doc(&mut rng, link));
        }

        // Branch document: the last gold intermediate also generically links
        // to a wrong candidate, so the reasoning tree genuinely diverges.
        if other_docs.len() < budget {
            let branch_target = take_wrong(&mut wrong_cursor);
            other_docs.push(generic_link(&gold_mids[spec.hops - 1], &branch_target));
        }

        // Filler documents mention leftover wrong candidates in neutral
        // sentences so their embeddings stay contextual.
        while other_docs.len() < budget {
            let w = take_wrong(&mut wrong_cursor);
            other_docs.push(format!(
                "{} {}",
                filler_sent(&mut rng),
                sentence(&["the", "archive", "mentions", &w, "."])
            ));
        }

        // Shuffle document order and track where the gold chain landed.
        let n_docs = gold_docs.len() + other_docs.len();
        let mut order: Vec<usize> = (0..n_docs).collect();
        order.shuffle(&mut rng);
        let mut supports = vec![String::new(); n_docs];
        let mut chain_positions = vec![0usize; gold_docs.len()];
        for (orig, &slot) in order.iter().enumerate() {
            let text = if orig < gold_docs.len() {
                chain_positions[orig] = slot;
                gold_docs[orig].clone()
            } else {
                other_docs[orig - gold_docs.len()].clone()
            };
            supports[slot] = text;
        }

        let mut candidates: Vec<String> =
            std::iter::once(answer.clone()).chain(wrongs.iter().cloned()).collect();
        candidates.shuffle(&mut rng);

        let query = format!("{rel}_of {subject}");
        rows.push((id.clone(), query.clone(), candidates.clone(), Some(answer.clone()), supports.clone()));
        gold_chains.insert(id.clone(), chain_positions);
        annotations.insert(id.clone(), Annotation::FollowsMultiple);

        // Build the in-memory instance through the same path the loader uses.
        let (body, subj_tokens) = parse_query(&query);
        let documents: Vec<Document> =
            supports.iter().enumerate().map(|(d, s)| Document::from_text(d, s)).collect();
        let cand_tokens: Vec<Vec<String>> = candidates.iter().map(|c| tokenize(c)).collect();
        let answer_tokens = tokenize(&answer);
        let answer_index = cand_tokens.iter().position(|c| *c == answer_tokens).expect("by construction");
        instances.push(QueryInstance {
            instance_id: id,
            query_body_tokens: body,
            query_subject_tokens: subj_tokens,
            documents,
            candidates: cand_tokens,
            answer_index: Some(answer_index),
            annotation: Some(Annotation::FollowsMultiple),
        });
    }

    Ok(SyntheticDataset { instances, gold_chains, annotations, rows })
}

/// Load a gold-chain sidecar file.
pub fn load_gold_chains(path: &Path) -> Result<GoldChains, CorpusError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: e })?;
    serde_json::from_str(&text)
        .map_err(|e| CorpusError::Json { path: path.display().to_string(), source: e })
}
