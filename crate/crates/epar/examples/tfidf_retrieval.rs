//! Compare the 2-hop, 1-hop, and random document selectors on synthetic
//! instances, measuring how many gold-chain documents each one captures.
//!
//! ```bash
//! cargo run -p epar --example tfidf_retrieval
//! ```

use epar::corpus::{generate_synthetic, SyntheticSpec};
use epar::retrieval::{one_hop_select, random_select, tfidf_score, two_hop_select, TfidfIndex};

fn main() -> anyhow::Result<()> {
    let ds = generate_synthetic(&SyntheticSpec { instances: 200, seed: 3, ..Default::default() })?;

    // Per-document scores against the query subject for one instance.
    let inst = &ds.instances[0];
    let index = TfidfIndex::build(inst);
    println!("subject {:?} scores:", inst.query_subject_tokens.join(" "));
    for d in 0..inst.num_docs() {
        println!("  doc {}: {:.4}", d, tfidf_score(&index, &inst.query_subject_tokens, d));
    }
    println!("2-hop selection (n'=4): {:?}\n", two_hop_select(inst, 4));

    // Gold-document capture rate at a budget of 4 documents.
    let budget = 4;
    let (mut two, mut one, mut rnd) = (0usize, 0usize, 0usize);
    let mut total = 0usize;
    for inst in &ds.instances {
        let gold = &ds.gold_chains[&inst.instance_id];
        total += gold.len();
        let count = |sel: &[usize]| gold.iter().filter(|d| sel.contains(d)).count();
        two += count(&two_hop_select(inst, budget));
        one += count(&one_hop_select(inst, budget));
        rnd += count(&random_select(inst, budget, 99));
    }
    println!("gold-document capture at budget {budget} over {} instances:", ds.instances.len());
    println!("  2-hop tf-idf: {:.3}", two as f64 / total as f64);
    println!("  1-hop tf-idf: {:.3}", one as f64 / total as f64);
    println!("  random:       {:.3}", rnd as f64 / total as f64);
    Ok(())
}
