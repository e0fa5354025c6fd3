//! Independent brute-force oracles shared by the integration suites.
//!
//! These deliberately re-derive everything from the raw instance data (no
//! shared code with the library implementations beyond the data model).

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use epar::corpus::{Document, QueryInstance};

/// Random small corpus: 2-7 documents of 1-12 words over a 12-word
/// vocabulary, subject of 1-2 words.
pub fn random_toy_instance(seed: u64) -> QueryInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = [
        "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa",
        "lambda", "mu",
    ];
    let n_docs = rng.gen_range(2..=7);
    let documents: Vec<Document> = (0..n_docs)
        .map(|i| {
            let len = rng.gen_range(1..=12);
            let words: Vec<&str> = (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect();
            Document::from_text(i, &format!("{}.", words.join(" ")))
        })
        .collect();
    let subject: Vec<String> =
        (0..rng.gen_range(1..=2)).map(|_| vocab[rng.gen_range(0..vocab.len())].to_string()).collect();
    QueryInstance {
        instance_id: format!("toy{seed}"),
        query_body_tokens: vec!["rel".into()],
        query_subject_tokens: subject,
        documents,
        candidates: vec![vec!["alpha".into()]],
        answer_index: Some(0),
        annotation: None,
    }
}

/// Reference tf-idf: tf = count / doc_len, idf = ln((1+N)/(1+df)) + 1,
/// summed over the distinct query terms present in the document, divided by
/// the L2 norm of the document's tf-idf vector. Terms iterate in sorted
/// order to match the implementation's summation order bit for bit.
pub fn brute_force_tfidf(inst: &QueryInstance, query: &[String], doc: usize) -> f64 {
    let n = inst.num_docs() as f64;
    let doc_tokens = &inst.documents[doc].tokens;
    let len = doc_tokens.len() as f64;
    let count = |term: &str, d: usize| -> usize {
        inst.documents[d].tokens.iter().filter(|t| t.as_str() == term).count()
    };
    let df = |term: &str| -> usize {
        (0..inst.num_docs()).filter(|&d| count(term, d) > 0).count()
    };
    let idf = |term: &str| ((1.0 + n) / (1.0 + df(term) as f64)).ln() + 1.0;

    let mut score = 0.0;
    let terms: BTreeSet<&String> = query.iter().collect();
    for term in terms {
        let c = count(term, doc);
        if c > 0 {
            score += (c as f64 / len) * idf(term);
        }
    }
    let doc_terms: BTreeSet<&String> = doc_tokens.iter().collect();
    let mut norm_sq = 0.0;
    for term in doc_terms {
        let w = (count(term, doc) as f64 / len) * idf(term);
        norm_sq += w * w;
    }
    let norm = norm_sq.sqrt();
    if score == 0.0 || norm == 0.0 {
        0.0
    } else {
        score / norm
    }
}

fn rank_by(inst: &QueryInstance, scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..inst.num_docs()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order
}

pub fn brute_force_one_hop(inst: &QueryInstance, k: usize) -> Vec<usize> {
    let scores: Vec<f64> = (0..inst.num_docs())
        .map(|d| brute_force_tfidf(inst, &inst.query_subject_tokens, d))
        .collect();
    rank_by(inst, &scores).into_iter().take(k).collect()
}

pub fn brute_force_two_hop(inst: &QueryInstance, n_prime: usize) -> Vec<usize> {
    let first = brute_force_one_hop(inst, 1)[0];
    let mut out = vec![first];
    if n_prime > 1 {
        let first_tokens = inst.documents[first].tokens.clone();
        let scores: Vec<f64> =
            (0..inst.num_docs()).map(|d| brute_force_tfidf(inst, &first_tokens, d)).collect();
        for d in rank_by(inst, &scores) {
            if d != first {
                out.push(d);
                if out.len() == n_prime {
                    break;
                }
            }
        }
    }
    out.truncate(inst.num_docs());
    out
}

/// Link edges parsed straight out of the generated sentences.
/// `... X is linked to Y .` is a generic edge; `... X <rel> of Y .` is a
/// relation edge.
pub fn parse_edges(inst: &QueryInstance) -> Vec<(usize, String, String, Option<String>)> {
    let mut edges = Vec::new();
    for (d, doc) in inst.documents.iter().enumerate() {
        for s in 0..doc.sentence_spans.len() {
            let toks = doc.sentence(s);
            for w in 0..toks.len() {
                if w + 4 < toks.len()
                    && toks[w + 1] == "is"
                    && toks[w + 2] == "linked"
                    && toks[w + 3] == "to"
                {
                    edges.push((d, toks[w].clone(), toks[w + 4].clone(), None));
                }
                if w + 2 < toks.len() && toks[w + 1].starts_with("rel") && toks[w + 2] == "of" {
                    if w + 3 < toks.len() {
                        edges.push((d, toks[w].clone(), toks[w + 3].clone(), Some(toks[w + 1].clone())));
                    }
                }
            }
        }
    }
    edges
}

/// Graph walk: following the gold documents' links from the subject must
/// end at the gold answer, one link per document in order.
pub fn assert_chain_walks_to_answer(inst: &QueryInstance, gold_chain: &[usize]) {
    let edges = parse_edges(inst);
    let answer = inst.answer_tokens().unwrap()[0].clone();
    let mut current = inst.query_subject_tokens[0].clone();
    for (hop, &doc) in gold_chain.iter().enumerate() {
        let step = edges.iter().find(|(d, src, _, _)| *d == doc && *src == current);
        let (_, _, dst, rel) = step.unwrap_or_else(|| {
            panic!("no link from {current} in doc {doc} (hop {hop}) of {}", inst.instance_id)
        });
        if hop == gold_chain.len() - 1 {
            let query_rel = &inst.query_body_tokens[0];
            assert_eq!(rel.as_deref(), Some(query_rel.as_str()), "final hop must use the query relation");
        }
        current = dst.clone();
    }
    assert_eq!(current, answer, "gold chain of {} must end at the answer", inst.instance_id);
}

/// Uniqueness: the answer is the only candidate reachable from the subject
/// through any link path ending with the query relation.
pub fn assert_unique_answer_path(inst: &QueryInstance) {
    let edges = parse_edges(inst);
    let query_rel = &inst.query_body_tokens[0];
    let answer = &inst.answer_tokens().unwrap()[0];

    // Entities reachable from the subject via any edges.
    let mut reachable: BTreeSet<String> = BTreeSet::new();
    reachable.insert(inst.query_subject_tokens[0].clone());
    loop {
        let mut grew = false;
        for (_, src, dst, _) in &edges {
            if reachable.contains(src) && !reachable.contains(dst) {
                reachable.insert(dst.clone());
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    // Candidates reachable through a query-relation edge from a reachable
    // entity.
    let endpoints: BTreeSet<&String> = edges
        .iter()
        .filter(|(_, src, _, rel)| rel.as_deref() == Some(query_rel.as_str()) && reachable.contains(src))
        .map(|(_, _, dst, _)| dst)
        .collect();
    for cand in &inst.candidates {
        let word = &cand[0];
        if endpoints.contains(word) {
            assert_eq!(word, answer, "{}: candidate {word} also completes a path", inst.instance_id);
        }
    }
    assert!(endpoints.contains(answer), "{}: answer must be reachable", inst.instance_id);
}
