//! Candidate mention location: exact token-subsequence scan over documents.

use super::QueryInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mention {
    pub doc: usize,
    pub start: usize,
    pub end: usize,
}

/// For each candidate, every case-insensitive exact token-subsequence match
/// across the instance's documents, ordered by `(doc, start)`. A candidate
/// with no mention gets an empty list (its embedding later falls back to
/// averaged word vectors).
pub fn locate_candidate_mentions(instance: &QueryInstance) -> Vec<Vec<Mention>> {
    instance
        .candidates
        .iter()
        .map(|cand| {
            let needle: Vec<String> = cand.iter().map(|t| t.to_lowercase()).collect();
            let mut found = Vec::new();
            if needle.is_empty() {
                return found;
            }
            for (d, doc) in instance.documents.iter().enumerate() {
                if doc.tokens.len() < needle.len() {
                    continue;
                }
                for start in 0..=doc.tokens.len() - needle.len() {
                    let window = &doc.tokens[start..start + needle.len()];
                    if window.iter().zip(&needle).all(|(w, n)| w.to_lowercase() == *n) {
                        found.push(Mention { doc: d, start, end: start + needle.len() });
                    }
                }
            }
            found
        })
        .collect()
}
