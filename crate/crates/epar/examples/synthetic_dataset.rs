//! Generate a synthetic multi-hop dataset and inspect one instance: the
//! query, the hidden gold chain of documents, and the distractors.
//!
//! ```bash
//! cargo run -p epar --example synthetic_dataset
//! ```

use epar::corpus::{generate_synthetic, SyntheticSpec};

fn main() -> anyhow::Result<()> {
    let spec = SyntheticSpec { instances: 5, seed: 42, ..Default::default() };
    let ds = generate_synthetic(&spec)?;
    println!(
        "{} instances, {} docs each, {} candidates each\n",
        ds.instances.len(),
        spec.docs_per_instance,
        spec.candidates
    );

    let inst = &ds.instances[0];
    let chain = &ds.gold_chains[&inst.instance_id];
    println!("instance {}", inst.instance_id);
    println!(
        "query: relation {:?} about subject {:?}",
        inst.query_body_tokens.join(" "),
        inst.query_subject_tokens.join(" ")
    );
    println!(
        "candidates: {:?} (answer = candidate {})",
        inst.candidates.iter().map(|c| c.join(" ")).collect::<Vec<_>>(),
        inst.answer_index.unwrap()
    );
    println!("gold chain (doc indices): {chain:?}\n");
    for doc in &inst.documents {
        let tag = match chain.iter().position(|&d| d == doc.id) {
            Some(hop) => format!("gold hop {}", hop + 1),
            None => "distractor/filler".to_string(),
        };
        println!("doc {} [{}] ({} sentences):", doc.id, tag, doc.sentence_spans.len());
        for s in 0..doc.sentence_spans.len() {
            println!("    {}", doc.sentence(s).join(" "));
        }
    }
    Ok(())
}
