//! Roll out the Document Explorer into a reasoning tree and print the full
//! trace: per-hop selection probabilities, per-chain proposals, and the
//! assembled evidence.
//!
//! ```bash
//! cargo run -p epar --example reasoning_tree
//! ```

use epar::corpus::{build_vocabulary, generate_synthetic, SyntheticSpec};
use epar::model::{EvalVariant, Model, ModelConfig};
use epar::trainer::{train, TrainConfig};

fn main() -> anyhow::Result<()> {
    let train_ds = generate_synthetic(&SyntheticSpec { instances: 60, seed: 1, ..Default::default() })?;
    let dev_ds = generate_synthetic(&SyntheticSpec { instances: 5, seed: 2, ..Default::default() })?;

    let mut cfg = ModelConfig::small(32, 16);
    cfg.dropout = 0.0;
    let (vocab, _) = build_vocabulary(&train_ds.instances, cfg.d, None, 1)?;
    let mut model = Model::init(cfg.clone(), vocab, 1);

    // A short warmup so the tree is not uniform noise.
    let tc = TrainConfig {
        model: cfg,
        learning_rate: 0.001,
        batch_size: 10,
        epochs: 3,
        seed: 1,
        grad_clip: 5.0,
        start_epoch: 0,
    };
    train(&mut model, &train_ds.instances, &[], &tc, None, None)?;

    let inst = &dev_ds.instances[0];
    let pred = model.predict(inst, EvalVariant::Full)?;
    println!("instance {}: root doc {}", inst.instance_id, pred.root);
    println!("gold chain: {:?}", dev_ds.gold_chains[&inst.instance_id]);
    for chain in &pred.chains {
        println!(
            "chain rank {} docs {:?} (log prob {:.3}) proposes {:?}",
            chain.rank,
            chain.docs,
            chain.log_prob,
            inst.candidates[chain.proposed].join(" ")
        );
        for (hop, top) in chain.per_hop_top5.iter().enumerate() {
            let pretty: Vec<String> =
                top.iter().map(|(d, p)| format!("doc{d}:{p:.2}")).collect();
            println!("    hop {}: {}", hop + 1, pretty.join(" "));
        }
    }
    println!("\nfull trace JSON:\n{}", serde_json::to_string_pretty(&pred.to_trace_json(inst))?);
    Ok(())
}
