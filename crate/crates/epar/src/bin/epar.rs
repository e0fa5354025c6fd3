//! Command-line surface: synthetic dataset generation, training,
//! evaluation, chain-recovery analysis, ablation tables, and per-instance
//! reasoning-tree traces.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use epar::corpus::{
    build_vocabulary, generate_synthetic, load_annotations, load_gold_chains, load_qangaroo,
    sidecar, QueryInstance, SyntheticSpec,
};
use epar::eval::{
    answer_span_recall_at_k, chain_recall_at_k, AblationReport, EvalReport, RankedPaths,
    RecallTable,
};
use epar::model::{EvalVariant, Model, ModelConfig};
use epar::retrieval::{one_hop_select, random_select, two_hop_select};
use epar::trainer::{train, train_reranker_head, TrainConfig};

#[derive(Parser)]
#[command(name = "epar", version, about = "Explore-Propose-Assemble reader for multi-hop QA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-hop chain dataset plus gold-chain and
    /// annotation sidecars.
    Synth(SynthArgs),
    /// Train a model on a QAngaroo-format dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint: accuracy overall and per annotation subset.
    Evaluate(EvaluateArgs),
    /// Chain-recovery and answer-span recall@k tables across selectors.
    AnalyzeChains(AnalyzeArgs),
    /// Ablation table over system variants.
    Ablate(AblateArgs),
    /// Emit the reasoning-tree trace JSON for one instance.
    Trace(TraceArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset path (sidecars are written next to it).
    #[arg(long)]
    out: PathBuf,
    /// Number of instances.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    hops: usize,
    #[arg(long, default_value_t = 200)]
    vocab: usize,
    #[arg(long, default_value_t = 8)]
    docs: usize,
    #[arg(long, default_value_t = 5)]
    candidates: usize,
    #[arg(long, default_value_t = 1)]
    distractors: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset (QAngaroo JSON).
    #[arg(long)]
    data: PathBuf,
    /// Development dataset for per-epoch accuracy and best-checkpoint
    /// selection.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint stem; writes <stem>.bin, <stem>.manifest.json,
    /// <stem>.model.json.
    #[arg(long)]
    out: PathBuf,
    /// Resume from this checkpoint stem.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Pretrained word-embedding text file (one `word v1 .. vd` per line).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model preset: small, full, or medhop.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    v: Option<usize>,
    /// Load the dataset in masked mode (placeholder candidates).
    #[arg(long, default_value_t = false)]
    masked: bool,
    /// Training log (line-delimited JSON); stdout when omitted.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Annotations sidecar; defaults to <data stem>.annotations.json when
    /// present.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Restrict to one subset: follows_multiple, follows_single,
    /// not_follows.
    #[arg(long)]
    subset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = false)]
    masked: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    data: PathBuf,
    /// Gold-chain sidecar; defaults to <data stem>.chains.json.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Restrict to one selector row: random, 1hop, 2hop, de, tfidf_de.
    #[arg(long)]
    selector: Option<String>,
    /// Largest k in the tables.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = false)]
    masked: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Training data for fine-tuning the reranker head before its row is
    /// reported (the head is untrained by the joint loss).
    #[arg(long)]
    train_data: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    reranker_epochs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = false)]
    masked: bool,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Instance id to trace.
    #[arg(long)]
    id: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = false)]
    masked: bool,
}

/// Resolve a path against EPAR_DATA_DIR when it does not exist as given.
fn resolve(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("EPAR_DATA_DIR") {
        Some(root) => {
            let joined = PathBuf::from(root).join(path);
            if joined.exists() {
                joined
            } else {
                path.to_path_buf()
            }
        }
        None => path.to_path_buf(),
    }
}

fn load_dataset(path: &Path, masked: bool, annotations: Option<&Path>) -> Result<Vec<QueryInstance>> {
    let path = resolve(path);
    if !path.exists() {
        bail!("dataset not found: {}", path.display());
    }
    let (mut instances, stats) =
        load_qangaroo(&path, masked).with_context(|| format!("loading {}", path.display()))?;
    if stats.dropped_answer_mismatch > 0 {
        eprintln!("dropped {} instances with answers missing from candidates", stats.dropped_answer_mismatch);
    }
    let ann_path = match annotations {
        Some(p) => Some(resolve(p)),
        None => {
            let p = sidecar(&path, "annotations");
            if p.exists() {
                Some(p)
            } else {
                None
            }
        }
    };
    if let Some(p) = ann_path {
        let attached = load_annotations(&p, &mut instances)?;
        eprintln!("attached {attached} annotations from {}", p.display());
    }
    Ok(instances)
}

fn write_or_print(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
            eprintln!("wrote {}", p.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        instances: args.n,
        hops: args.hops,
        vocab_size: args.vocab,
        docs_per_instance: args.docs,
        candidates: args.candidates,
        distractor_chains: args.distractors,
        seed: args.seed,
    };
    let ds = generate_synthetic(&spec)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    ds.save(&args.out)?;
    eprintln!(
        "wrote {} instances to {} (+ {} and {})",
        args.n,
        args.out.display(),
        sidecar(&args.out, "chains").display(),
        sidecar(&args.out, "annotations").display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::from_kv_file(&resolve(p))?,
        None => TrainConfig::default(),
    };
    if let Some(p) = &args.preset {
        cfg.set("preset", p)?;
    }
    if let Some(d) = args.d {
        cfg.set("d", &d.to_string())?;
    }
    if let Some(v) = args.v {
        cfg.set("v", &v.to_string())?;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }

    let train_data = load_dataset(&args.data, args.masked, None)?;
    let dev_data = match &args.dev {
        Some(p) => load_dataset(p, args.masked, None)?,
        None => Vec::new(),
    };

    let mut model = match &args.resume {
        Some(stem) => {
            let (model, next_epoch) = Model::load(&resolve(stem))?;
            cfg.start_epoch = next_epoch;
            cfg.model = model.cfg.clone();
            eprintln!("resumed from {} at epoch {next_epoch}", stem.display());
            model
        }
        None => {
            let emb = args.embeddings.as_deref().map(resolve);
            let (vocab, stats) =
                build_vocabulary(&train_data, cfg.model.d, emb.as_deref(), cfg.seed)?;
            if emb.is_some() {
                eprintln!(
                    "embedding coverage: {:.1}% ({} skipped lines)",
                    100.0 * stats.coverage(),
                    stats.skipped_lines
                );
            }
            Model::init(cfg.model.clone(), vocab, cfg.seed)
        }
    };

    let mut log_file;
    let mut stdout;
    let log: &mut dyn std::io::Write = match &args.log {
        Some(p) => {
            log_file = fs::File::create(p)?;
            &mut log_file
        }
        None => {
            stdout = std::io::stdout();
            &mut stdout
        }
    };

    let summary = train(&mut model, &train_data, &dev_data, &cfg, Some(&args.out), Some(log))?;
    eprintln!(
        "best dev accuracy {:.4} at epoch {}; checkpoint {}",
        summary.best_dev_accuracy,
        summary.best_epoch,
        args.out.display()
    );
    Ok(())
}

fn predictions(
    model: &Model,
    data: &[QueryInstance],
    variant: EvalVariant,
) -> Result<BTreeMap<String, usize>> {
    let mut preds = BTreeMap::new();
    for inst in data {
        let p = model.predict(inst, variant)?;
        preds.insert(inst.instance_id.clone(), p.predicted);
    }
    Ok(preds)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let data = load_dataset(&args.data, args.masked, args.annotations.as_deref())?;
    let (model, _) = Model::load(&resolve(&args.checkpoint))?;
    let data = match args.subset.as_deref() {
        None => data,
        Some(name) => {
            let want = match name {
                "follows_multiple" => epar::corpus::Annotation::FollowsMultiple,
                "follows_single" => epar::corpus::Annotation::FollowsSingle,
                "not_follows" => epar::corpus::Annotation::NotFollows,
                other => bail!("unknown subset: {other}"),
            };
            data.into_iter().filter(|i| i.annotation == Some(want)).collect()
        }
    };
    if data.is_empty() {
        bail!("no instances to evaluate after filtering");
    }
    let preds = predictions(&model, &data, EvalVariant::Full)?;
    let report = EvalReport::build(&preds, &data).context("no labeled instances")?;
    println!(
        "accuracy: {:.4} ({}/{})",
        report.overall.rate(),
        report.overall.correct,
        report.overall.total
    );
    if let Some(s) = &report.follows_multiple {
        println!("follows+multiple: {:.4} ({}/{})", s.rate(), s.correct, s.total);
    }
    if let Some(s) = &report.follows_single {
        println!("follows+single: {:.4} ({}/{})", s.rate(), s.correct, s.total);
    }
    write_or_print(args.out.as_deref(), &serde_json::to_value(&report)?)?;
    Ok(())
}

fn selector_paths(
    name: &str,
    model: &Model,
    data: &[QueryInstance],
    k_max: usize,
    seed: u64,
) -> Result<Vec<RankedPaths>> {
    let mut out = Vec::with_capacity(data.len());
    for inst in data {
        let paths = match name {
            "random" => RankedPaths::SelectorPrefix(random_select(inst, (k_max + 1).min(inst.num_docs()), seed)),
            "1hop" => RankedPaths::SelectorPrefix(one_hop_select(inst, (k_max + 1).min(inst.num_docs()))),
            "2hop" => RankedPaths::SelectorPrefix(two_hop_select(inst, (k_max + 1).min(inst.num_docs()))),
            "de" => {
                // Explorer without TF-IDF pre-retrieval: tree over all docs.
                let mut no_tfidf = Model {
                    cfg: model.cfg.clone(),
                    vocab: model.vocab.clone(),
                    params: model.params.clone(),
                };
                no_tfidf.cfg.use_tfidf = false;
                let pred = no_tfidf.predict(inst, EvalVariant::Full)?;
                RankedPaths::Chains(pred.ranked_chain_docs())
            }
            "tfidf_de" => {
                let pred = model.predict(inst, EvalVariant::Full)?;
                RankedPaths::Chains(pred.ranked_chain_docs())
            }
            other => bail!("unknown selector: {other}"),
        };
        out.push(paths);
    }
    Ok(out)
}

const ALL_SELECTORS: &[&str] = &["random", "1hop", "2hop", "de", "tfidf_de"];

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let data_path = resolve(&args.data);
    let data = load_dataset(&args.data, args.masked, None)?;
    let (model, _) = Model::load(&resolve(&args.checkpoint))?;
    let gold_path = args.gold.clone().unwrap_or_else(|| sidecar(&data_path, "chains"));
    let gold_map = if gold_path.exists() {
        load_gold_chains(&gold_path)?
    } else {
        eprintln!("no gold-chain file at {}; chain recovery excluded", gold_path.display());
        Default::default()
    };
    let gold: Vec<Option<Vec<usize>>> =
        data.iter().map(|i| gold_map.get(&i.instance_id).cloned()).collect();

    let selectors: Vec<&str> = match args.selector.as_deref() {
        Some(s) => vec![s],
        None => ALL_SELECTORS.to_vec(),
    };
    let ks: Vec<usize> = (1..=args.k).collect();
    let mut chain_rows = BTreeMap::new();
    let mut span_rows = BTreeMap::new();
    let mut counted = 0;
    for name in &selectors {
        let paths = selector_paths(name, &model, &data, args.k, args.seed)?;
        let chain_rates: Vec<f64> =
            ks.iter().map(|&k| chain_recall_at_k(&paths, &gold, k).rate()).collect();
        counted = chain_recall_at_k(&paths, &gold, 1).counted;
        let span_rates: Vec<f64> =
            ks.iter().map(|&k| answer_span_recall_at_k(&paths, &data, k).rate()).collect();
        chain_rows.insert(name.to_string(), chain_rates);
        span_rows.insert(name.to_string(), span_rates);
    }
    let chain_table = RecallTable {
        metric: "chain_recovery_recall".into(),
        ks: ks.clone(),
        rows: chain_rows,
        counted,
    };
    let span_table = RecallTable {
        metric: "answer_span_recall".into(),
        ks: ks.clone(),
        rows: span_rows,
        counted: data.len(),
    };

    for table in [&chain_table, &span_table] {
        println!("\n{}", table.metric);
        print!("{:<10}", "selector");
        for k in &table.ks {
            print!(" R@{k:<4}");
        }
        println!();
        for (name, rates) in &table.rows {
            print!("{name:<10}");
            for r in rates {
                print!(" {r:<5.3}");
            }
            println!();
        }
    }
    let report = serde_json::json!({
        "chain_recovery": chain_table,
        "answer_span": span_table,
    });
    write_or_print(args.out.as_deref(), &report)?;
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let data = load_dataset(&args.data, args.masked, None)?;
    let (mut model, _) = Model::load(&resolve(&args.checkpoint))?;
    if let Some(train_path) = &args.train_data {
        let train_data = load_dataset(train_path, args.masked, None)?;
        let n = train_reranker_head(&mut model, &train_data, args.reranker_epochs, 0.001, 11)?;
        eprintln!("reranker head fine-tuned on {n} instance passes");
    } else {
        eprintln!("note: --train-data not given; the reranker row uses an untrained head");
    }
    let variants = [
        EvalVariant::FullDoc,
        EvalVariant::Lead1,
        EvalVariant::ApNoAttention,
        EvalVariant::SingleChain,
        EvalVariant::AvgVote,
        EvalVariant::MaxVote,
        EvalVariant::Reranker,
        EvalVariant::Full,
    ];
    let mut rows = BTreeMap::new();
    for variant in variants {
        let preds = predictions(&model, &data, variant)?;
        let acc = epar::eval::accuracy(&preds, &data, None).context("no labeled instances")?;
        println!("{:<14} {:.4} ({}/{})", variant.name(), acc.rate(), acc.correct, acc.total);
        rows.insert(variant.name().to_string(), acc.rate());
    }
    let report = AblationReport { rows, total: data.len() };
    write_or_print(args.out.as_deref(), &serde_json::to_value(&report)?)?;
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> Result<()> {
    let data = load_dataset(&args.data, args.masked, None)?;
    let (model, _) = Model::load(&resolve(&args.checkpoint))?;
    let inst = data
        .iter()
        .find(|i| i.instance_id == args.id)
        .with_context(|| format!("instance {} not found", args.id))?;
    let trace = model.trace(inst)?;
    write_or_print(args.out.as_deref(), &trace)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::AnalyzeChains(args) => cmd_analyze(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Trace(args) => cmd_trace(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let msg = format!("{e:#}");
            if msg.contains("not found") || msg.contains("No such file") {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
