//! Vocabulary: word/char index maps plus the initial embedding matrix.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tokenize::CHAR_PAD_LEN;
use super::{CorpusError, QueryInstance};
use crate::tensor::ModelParams;

pub const PAD: usize = 0;
pub const UNK: usize = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    chars: Vec<char>,
    /// Word embedding dimension d.
    pub dim: usize,
    /// Initial `[V x d]` embedding matrix, row-major; PAD row is zero.
    pub embedding: Vec<f64>,
    #[serde(skip)]
    word_index: HashMap<String, usize>,
    #[serde(skip)]
    char_index: HashMap<char, usize>,
}

impl Vocabulary {
    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn word_id(&self, w: &str) -> usize {
        self.word_index.get(w).copied().unwrap_or(UNK)
    }

    pub fn contains_word(&self, w: &str) -> bool {
        self.word_index.contains_key(w)
    }

    pub fn word_ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.word_id(t)).collect()
    }

    /// Fixed-length character id sequence for one word (PAD-filled).
    pub fn char_ids(&self, word: &str) -> Vec<usize> {
        let mut out: Vec<usize> = word
            .chars()
            .take(CHAR_PAD_LEN)
            .map(|c| self.char_index.get(&c).copied().unwrap_or(UNK))
            .collect();
        out.resize(CHAR_PAD_LEN, PAD);
        out
    }

    /// Rebuild the lookup maps after deserialization.
    pub fn rebuild_index(&mut self) {
        self.word_index = self.words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
        self.char_index = self.chars.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
    }

    /// Initial embedding rows as a named parameter value.
    pub fn embedding_tensor(&self) -> crate::tensor::Tensor {
        crate::tensor::Tensor::new(vec![self.num_words(), self.dim], self.embedding.clone())
            .expect("vocab embedding shape")
    }
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingStats {
    /// Non-reserved vocabulary words that received a pretrained vector.
    pub matched: usize,
    /// Non-reserved vocabulary words total.
    pub total: usize,
    pub skipped_lines: usize,
}

impl EmbeddingStats {
    pub fn coverage(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.matched as f64 / self.total as f64
        }
    }
}

/// Parse a text embedding file: one `word v1 ... vd` per line. Malformed
/// lines are skipped and counted.
pub fn load_embedding_file(
    path: &Path,
    dim: usize,
) -> Result<(HashMap<String, Vec<f64>>, usize), CorpusError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: e })?;
    let mut map = HashMap::new();
    let mut skipped = 0usize;
    for line in text.lines() {
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        let values: Result<Vec<f64>, _> = fields.map(|f| f.parse::<f64>()).collect();
        match values {
            Ok(v) if !v.is_empty() => {
                if v.len() != dim {
                    return Err(CorpusError::Config(format!(
                        "embedding file dimension {} does not match configured d={}",
                        v.len(),
                        dim
                    )));
                }
                map.insert(word.to_string(), v);
            }
            _ => skipped += 1,
        }
    }
    Ok((map, skipped))
}

/// Build the vocabulary over the training split. Words present in the
/// embedding file get pretrained vectors, everything else draws from
/// N(0, 0.1^2) on a stream seeded by `seed`; the PAD row stays zero.
pub fn build_vocabulary(
    instances: &[QueryInstance],
    dim: usize,
    embedding_file: Option<&Path>,
    seed: u64,
) -> Result<(Vocabulary, EmbeddingStats), CorpusError> {
    let mut words: Vec<String> = vec!["<pad>".into(), "<unk>".into()];
    let mut word_index: HashMap<String, usize> =
        words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
    let mut chars: Vec<char> = vec!['\u{0}', '\u{1}'];
    let mut char_index: HashMap<char, usize> =
        chars.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();

    let add_word = |w: &str, words: &mut Vec<String>, word_index: &mut HashMap<String, usize>,
                        chars: &mut Vec<char>, char_index: &mut HashMap<char, usize>| {
        if !word_index.contains_key(w) {
            word_index.insert(w.to_string(), words.len());
            words.push(w.to_string());
            for c in w.chars() {
                if !char_index.contains_key(&c) {
                    char_index.insert(c, chars.len());
                    chars.push(c);
                }
            }
        }
    };

    for inst in instances {
        for t in inst.query_body_tokens.iter().chain(&inst.query_subject_tokens) {
            add_word(t, &mut words, &mut word_index, &mut chars, &mut char_index);
        }
        for d in &inst.documents {
            for t in &d.tokens {
                add_word(t, &mut words, &mut word_index, &mut chars, &mut char_index);
            }
        }
        for c in &inst.candidates {
            for t in c {
                add_word(t, &mut words, &mut word_index, &mut chars, &mut char_index);
            }
        }
    }

    let pretrained = match embedding_file {
        Some(p) => Some(load_embedding_file(p, dim)?),
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut embedding = vec![0.0; words.len() * dim];
    let mut stats = EmbeddingStats {
        matched: 0,
        total: words.len().saturating_sub(2),
        skipped_lines: pretrained.as_ref().map(|(_, s)| *s).unwrap_or(0),
    };
    for (i, w) in words.iter().enumerate() {
        if i == PAD {
            continue; // PAD row fixed at zero
        }
        let row = &mut embedding[i * dim..(i + 1) * dim];
        match pretrained.as_ref().and_then(|(m, _)| m.get(w)) {
            Some(v) => {
                row.copy_from_slice(v);
                if i != UNK {
                    stats.matched += 1;
                }
            }
            None => {
                for r in row.iter_mut() {
                    *r = crate::tensor::gauss(&mut rng) * 0.1;
                }
            }
        }
    }

    let mut vocab =
        Vocabulary { words, chars, dim, embedding, word_index: HashMap::new(), char_index: HashMap::new() };
    vocab.rebuild_index();
    Ok((vocab, stats))
}

/// Names of embedding parameters whose PAD rows must stay zero.
pub fn pad_row_fixups(params: &mut ModelParams) {
    for name in ["enc.word_emb", "enc.char_emb"] {
        if params.contains(name) {
            let _ = params.zero_rows(name, &[PAD]);
        }
    }
}
