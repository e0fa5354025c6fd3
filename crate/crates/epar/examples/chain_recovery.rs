//! Chain-recovery and answer-span recall@k tables comparing the random,
//! 1-hop, 2-hop, explorer-only, and tf-idf + explorer selectors.
//!
//! ```bash
//! cargo run -p epar --release --example chain_recovery
//! ```

use epar::corpus::{build_vocabulary, generate_synthetic, SyntheticSpec};
use epar::eval::{answer_span_recall_at_k, chain_recall_at_k, RankedPaths};
use epar::model::{EvalVariant, Model, ModelConfig};
use epar::retrieval::{one_hop_select, random_select, two_hop_select};
use epar::trainer::{train, TrainConfig};

fn main() -> anyhow::Result<()> {
    let train_ds =
        generate_synthetic(&SyntheticSpec { instances: 300, seed: 7, ..Default::default() })?;
    let dev_ds =
        generate_synthetic(&SyntheticSpec { instances: 100, seed: 9, ..Default::default() })?;

    let mut cfg = ModelConfig::small(32, 16);
    cfg.dropout = 0.1;
    let (vocab, _) = build_vocabulary(&train_ds.instances, cfg.d, None, 7)?;
    let mut model = Model::init(cfg.clone(), vocab, 7);
    let tc = TrainConfig {
        model: cfg,
        learning_rate: 0.001,
        batch_size: 10,
        epochs: 8,
        seed: 7,
        grad_clip: 5.0,
        start_epoch: 0,
    };
    train(&mut model, &train_ds.instances, &[], &tc, None, None)?;

    let k_max = 5;
    let gold: Vec<Option<Vec<usize>>> = dev_ds
        .instances
        .iter()
        .map(|i| dev_ds.gold_chains.get(&i.instance_id).cloned())
        .collect();

    let mut de_only = model
        .params
        .clone();
    std::mem::swap(&mut de_only, &mut model.params.clone());
    let mut no_tfidf = Model { cfg: model.cfg.clone(), vocab: model.vocab.clone(), params: model.params.clone() };
    no_tfidf.cfg.use_tfidf = false;

    let mut rows: Vec<(&str, Vec<RankedPaths>)> = Vec::new();
    let collect = |f: &dyn Fn(&epar::corpus::QueryInstance) -> RankedPaths| -> Vec<RankedPaths> {
        dev_ds.instances.iter().map(f).collect()
    };
    rows.push(("random", collect(&|i| {
        RankedPaths::SelectorPrefix(random_select(i, (k_max + 1).min(i.num_docs()), 5))
    })));
    rows.push(("1hop", collect(&|i| {
        RankedPaths::SelectorPrefix(one_hop_select(i, (k_max + 1).min(i.num_docs())))
    })));
    rows.push(("2hop", collect(&|i| {
        RankedPaths::SelectorPrefix(two_hop_select(i, (k_max + 1).min(i.num_docs())))
    })));
    let de_paths: Vec<RankedPaths> = dev_ds
        .instances
        .iter()
        .map(|i| RankedPaths::Chains(no_tfidf.predict(i, EvalVariant::Full).unwrap().ranked_chain_docs()))
        .collect();
    rows.push(("de", de_paths));
    let full_paths: Vec<RankedPaths> = dev_ds
        .instances
        .iter()
        .map(|i| RankedPaths::Chains(model.predict(i, EvalVariant::Full).unwrap().ranked_chain_docs()))
        .collect();
    rows.push(("tfidf_de", full_paths));

    println!("chain recovery recall@k (gold chain contained in a top-k path):");
    print!("{:<10}", "");
    (1..=k_max).for_each(|k| print!("  R@{k}  "));
    println!();
    for (name, paths) in &rows {
        print!("{name:<10}");
        for k in 1..=k_max {
            print!(" {:.3} ", chain_recall_at_k(paths, &gold, k).rate());
        }
        println!();
    }

    println!("\nanswer-span recall@k (answer mentioned in a top-k path):");
    for (name, paths) in &rows {
        print!("{name:<10}");
        for k in 1..=k_max {
            print!(" {:.3} ", answer_span_recall_at_k(paths, &dev_ds.instances, k).rate());
        }
        println!();
    }
    Ok(())
}
