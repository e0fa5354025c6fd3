//! Data model and ingestion: QAngaroo-format loading, tokenization,
//! vocabulary construction, candidate-mention location, and the synthetic
//! chain-dataset generator used for desk-scale verification.

mod mentions;
mod qangaroo;
mod synthetic;
mod tokenize;
mod vocab;

pub use mentions::{locate_candidate_mentions, Mention};
pub use qangaroo::{load_annotations, load_qangaroo, save_qangaroo, Annotation, LoadStats};
pub use synthetic::{generate_synthetic, load_gold_chains, sidecar, GoldChains, SyntheticDataset, SyntheticSpec};
pub use tokenize::{split_sentences, tokenize, word_chars, CHAR_PAD_LEN};
pub use vocab::{build_vocabulary, load_embedding_file, pad_row_fixups, EmbeddingStats, Vocabulary, PAD, UNK};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("instance {id}: {reason}")]
    Instance { id: String, reason: String },
    #[error("invalid dataset spec: {0}")]
    Spec(String),
    #[error("configuration error: {0}")]
    Config(String),
}

/// One supporting document: lowercased tokens, per-word character ids
/// (handled by the vocabulary), and sentence boundaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    /// Index of this document within its instance.
    pub id: usize,
    pub tokens: Vec<String>,
    /// `[start, end)` token ranges partitioning `0..tokens.len()`.
    pub sentence_spans: Vec<(usize, usize)>,
}

impl Document {
    pub fn from_text(id: usize, text: &str) -> Self {
        let (tokens, sentence_spans) = split_sentences(text);
        if tokens.is_empty() {
            // An empty support still needs one encodable token.
            return Document {
                id,
                tokens: vec!["<empty>".to_string()],
                sentence_spans: vec![(0, 1)],
            };
        }
        Document { id, tokens, sentence_spans }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens of sentence `s`.
    pub fn sentence(&self, s: usize) -> &[String] {
        let (start, end) = self.sentence_spans[s];
        &self.tokens[start..end]
    }
}

/// One question: a relation ("body"), the entity it is about ("subject"),
/// supporting documents, answer candidates, and the gold answer when known.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryInstance {
    pub instance_id: String,
    pub query_body_tokens: Vec<String>,
    pub query_subject_tokens: Vec<String>,
    pub documents: Vec<Document>,
    /// Tokenized candidate surface forms.
    pub candidates: Vec<Vec<String>>,
    /// Index into `candidates`; absent at blind test time.
    pub answer_index: Option<usize>,
    pub annotation: Option<Annotation>,
}

impl QueryInstance {
    pub fn num_docs(&self) -> usize {
        self.documents.len()
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn answer_tokens(&self) -> Option<&[String]> {
        self.answer_index.map(|i| self.candidates[i].as_slice())
    }
}

/// Split a QAngaroo query string into body and subject token lists. The
/// first whitespace field is the relation, kept together by underscores and
/// then sub-split on them; the remaining fields are the subject.
pub fn parse_query(query: &str) -> (Vec<String>, Vec<String>) {
    let mut fields = query.split_whitespace();
    let body_raw = fields.next().unwrap_or_default();
    let body: Vec<String> = body_raw
        .split('_')
        .filter(|s| !s.is_empty())
        .flat_map(tokenize)
        .collect();
    let subject_raw = fields.collect::<Vec<_>>().join(" ");
    let subject = tokenize(&subject_raw);
    (body, subject)
}
