//! QAngaroo-format JSON ingestion.
//!
//! A dataset file is a JSON array of objects with fields `id`, `query`,
//! `candidates`, `answer` (optional), and `supports`. An optional
//! annotations sidecar maps instance ids to one of `follows_multiple`,
//! `follows_single`, or `not_follows`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_query, tokenize, CorpusError, Document, QueryInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annotation {
    FollowsMultiple,
    FollowsSingle,
    NotFollows,
}

#[derive(Debug, Clone, Default)]
pub struct LoadStats {
    pub loaded: usize,
    /// Instances dropped because the answer is not among the candidates.
    pub dropped_answer_mismatch: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawInstance {
    id: String,
    query: String,
    candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer: Option<String>,
    supports: Vec<String>,
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io { path: path.display().to_string(), source }
}

/// Load a QAngaroo JSON file. `masked` marks datasets whose candidate
/// surface forms are opaque placeholder tokens; tokenization already keeps
/// placeholders intact, so the flag only affects bookkeeping.
pub fn load_qangaroo(
    path: &Path,
    _masked: bool,
) -> Result<(Vec<QueryInstance>, LoadStats), CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let raw: Vec<RawInstance> = serde_json::from_str(&text)
        .map_err(|e| CorpusError::Json { path: path.display().to_string(), source: e })?;
    let mut out = Vec::with_capacity(raw.len());
    let mut stats = LoadStats::default();
    for r in raw {
        if r.supports.is_empty() {
            return Err(CorpusError::Instance {
                id: r.id,
                reason: "empty supports array".into(),
            });
        }
        if r.candidates.is_empty() {
            return Err(CorpusError::Instance { id: r.id, reason: "no candidates".into() });
        }
        let (body, subject) = parse_query(&r.query);
        let documents: Vec<Document> = r
            .supports
            .iter()
            .enumerate()
            .map(|(i, s)| Document::from_text(i, s))
            .collect();
        let candidates: Vec<Vec<String>> = r.candidates.iter().map(|c| tokenize(c)).collect();
        let answer_index = match &r.answer {
            None => None,
            Some(ans) => {
                let ans_tokens = tokenize(ans);
                match candidates.iter().position(|c| *c == ans_tokens) {
                    Some(i) => Some(i),
                    None => {
                        eprintln!(
                            "warning: instance {}: answer not among candidates, dropped",
                            r.id
                        );
                        stats.dropped_answer_mismatch += 1;
                        continue;
                    }
                }
            }
        };
        stats.loaded += 1;
        out.push(QueryInstance {
            instance_id: r.id,
            query_body_tokens: body,
            query_subject_tokens: subject,
            documents,
            candidates,
            answer_index,
            annotation: None,
        });
    }
    Ok((out, stats))
}

/// Serialize instances back to the QAngaroo wire format. Used by the
/// synthetic generator; tokens are joined with single spaces.
pub fn save_qangaroo(
    path: &Path,
    rows: &[(String, String, Vec<String>, Option<String>, Vec<String>)],
) -> Result<(), CorpusError> {
    let raw: Vec<RawInstance> = rows
        .iter()
        .map(|(id, query, candidates, answer, supports)| RawInstance {
            id: id.clone(),
            query: query.clone(),
            candidates: candidates.clone(),
            answer: answer.clone(),
            supports: supports.clone(),
        })
        .collect();
    let text = serde_json::to_string_pretty(&raw)
        .map_err(|e| CorpusError::Json { path: path.display().to_string(), source: e })?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Load the annotations sidecar and attach it to matching instances.
pub fn load_annotations(
    path: &Path,
    instances: &mut [QueryInstance],
) -> Result<usize, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let map: BTreeMap<String, Annotation> = serde_json::from_str(&text)
        .map_err(|e| CorpusError::Json { path: path.display().to_string(), source: e })?;
    let mut attached = 0;
    for inst in instances.iter_mut() {
        if let Some(a) = map.get(&inst.instance_id) {
            inst.annotation = Some(*a);
            attached += 1;
        }
    }
    Ok(attached)
}
