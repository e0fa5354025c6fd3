use epar::corpus::{build_vocabulary, generate_synthetic, SyntheticSpec};
use epar::eval::{answer_span_recall_at_k, chain_recall_at_k, RankedPaths};
use epar::model::{EvalVariant, Model, ModelConfig};
use epar::retrieval::{one_hop_select, random_select, two_hop_select};
use epar::trainer::{train, TrainConfig};
use std::time::Instant;

fn main() {
    let train_ds = generate_synthetic(&SyntheticSpec { instances: 500, seed: 7, ..Default::default() }).unwrap();
    let dev_ds = generate_synthetic(&SyntheticSpec { instances: 100, seed: 8, ..Default::default() }).unwrap();
    for model_seed in [11u64, 12, 13] {
        let t0 = Instant::now();
        let mut cfg = ModelConfig::small(32, 16);
        cfg.dropout = 0.1;
        let (vocab, _) = build_vocabulary(&train_ds.instances, cfg.d, None, model_seed).unwrap();
        let mut model = Model::init(cfg.clone(), vocab, model_seed);
        let tc = TrainConfig { model: cfg.clone(), learning_rate: 0.003, batch_size: 10, epochs: 40, seed: model_seed, grad_clip: 5.0, start_epoch: 0 };
        let summary = train(&mut model, &train_ds.instances, &dev_ds.instances, &tc, None, None).unwrap();
        print!("seed {model_seed}: best dev {:.2} |", summary.best_dev_accuracy);
        for v in [EvalVariant::Full, EvalVariant::SingleChain, EvalVariant::AvgVote, EvalVariant::MaxVote, EvalVariant::ApNoAttention, EvalVariant::Lead1, EvalVariant::FullDoc] {
            let mut ok = 0;
            for inst in &dev_ds.instances {
                let p = model.predict(inst, v).unwrap();
                ok += (p.predicted == inst.answer_index.unwrap()) as usize;
            }
            print!(" {}={:.2}", v.name(), ok as f64 / 100.0);
        }
        println!(" | {:?}", t0.elapsed());

        // Criterion 6 orderings.
        let gold: Vec<Option<Vec<usize>>> = dev_ds.instances.iter().map(|i| dev_ds.gold_chains.get(&i.instance_id).cloned()).collect();
        let mut no_tfidf = Model { cfg: model.cfg.clone(), vocab: model.vocab.clone(), params: model.params.clone() };
        no_tfidf.cfg.use_tfidf = false;
        let tfidf_de: Vec<RankedPaths> = dev_ds.instances.iter().map(|i| RankedPaths::Chains(model.predict(i, EvalVariant::Full).unwrap().ranked_chain_docs())).collect();
        let de: Vec<RankedPaths> = dev_ds.instances.iter().map(|i| RankedPaths::Chains(no_tfidf.predict(i, EvalVariant::Full).unwrap().ranked_chain_docs())).collect();
        let rnd: Vec<RankedPaths> = dev_ds.instances.iter().map(|i| RankedPaths::SelectorPrefix(random_select(i, 6, 5))).collect();
        let onehop: Vec<RankedPaths> = dev_ds.instances.iter().map(|i| RankedPaths::SelectorPrefix(one_hop_select(i, 6))).collect();
        let twohop: Vec<RankedPaths> = dev_ds.instances.iter().map(|i| RankedPaths::SelectorPrefix(two_hop_select(i, 6))).collect();
        println!("  chain R@1: tfidf_de {:.2} de {:.2} 2hop {:.2} 1hop {:.2} random {:.2}",
            chain_recall_at_k(&tfidf_de, &gold, 1).rate(), chain_recall_at_k(&de, &gold, 1).rate(),
            chain_recall_at_k(&twohop, &gold, 1).rate(), chain_recall_at_k(&onehop, &gold, 1).rate(), chain_recall_at_k(&rnd, &gold, 1).rate());
        println!("  span  R@1: de {:.2} random {:.2} | R@3: de {:.2} random {:.2}",
            answer_span_recall_at_k(&de, &dev_ds.instances, 1).rate(), answer_span_recall_at_k(&rnd, &dev_ds.instances, 1).rate(),
            answer_span_recall_at_k(&de, &dev_ds.instances, 3).rate(), answer_span_recall_at_k(&rnd, &dev_ds.instances, 3).rate());
    }
}
