//! Command-line pipeline: stats, preprocess, train, eval, ask, trace.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sgqa_core::data::{
    augment_symmetric_edges, compute_stats, count_unpaired_edges, parse_questions,
    parse_scene_graphs, GraphBatch, SceneGraph, Vocabulary,
};
use sgqa_core::lang::EmbeddingTable;
use sgqa_core::model::{Model, ModelError};
use sgqa_core::tensor::{Mode, ParamSet, SplitRng};
use sgqa_core::train::{self, checkpoint, CheckpointMeta, Dataset, TrainError};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "sgqa",
    version,
    about = "Answer natural-language questions over scene graphs with instruction-conditioned graph message passing"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print dataset statistics for a scene-graph file
    Stats {
        /// Scene-graph JSON file (object keyed by graph id)
        #[arg(long)]
        graphs: PathBuf,
        /// Emit JSON instead of the aligned text table
        #[arg(long)]
        json: bool,
    },
    /// Build the vocabulary and augmented-graph cache
    Preprocess {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model end to end
    Train(Box<TrainArgs>),
    /// Evaluate a checkpoint and print the accuracy table
    Eval(EvalArgs),
    /// Answer a single question against one graph
    Ask(AskArgs),
    /// Answer a question and write the per-step reasoning trace
    Trace(AskArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// JSON run config; flags below override file values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graphs: Option<PathBuf>,
    #[arg(long)]
    questions: Option<PathBuf>,
    /// Held-out questions evaluated once per epoch
    #[arg(long)]
    val_questions: Option<PathBuf>,
    /// Pretrained word vectors, text format: word v1 ... vN (default: random init)
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resume from a checkpoint written by an earlier run
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Layer family: gcn | gine | gat | lcgn (default gat)
    #[arg(long)]
    family: Option<String>,
    /// RNG seed (default 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs (default 100)
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size (default 32; 256 reproduces the reference schedule)
    #[arg(long)]
    batch_size: Option<usize>,
    /// Base learning rate (default 1e-4)
    #[arg(long)]
    lr: Option<f64>,
    /// Number of instruction vectors / reasoning steps M (default 5)
    #[arg(long)]
    steps: Option<usize>,
    /// Dropout probability (default 0.1)
    #[arg(long)]
    dropout: Option<f64>,
    /// Word-embedding dimension (default 300)
    #[arg(long)]
    word_dim: Option<usize>,
    /// Node-state dimension (default 300)
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Instruction-vector dimension (default 512)
    #[arg(long)]
    instruction_dim: Option<usize>,
    /// Depth of the GINE update MLP: 1 or 2 (default 1)
    #[arg(long)]
    gine_theta_depth: Option<u8>,
    /// Save a checkpoint every N epochs (default 1)
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    /// Vocabulary JSON (default: vocab.json next to the checkpoint)
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Directory for report.json/report.txt/CSVs/predictions.jsonl
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AskArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long)]
    graph_id: String,
    #[arg(long)]
    question: String,
    /// Vocabulary JSON (default: vocab.json next to the checkpoint)
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Trace output path (trace command only)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else if let TrainError::Model(ModelError::Config(_)) = e {
            CliError::Usage(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<sgqa_core::data::DataError> for CliError {
    fn from(e: sgqa_core::data::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => CliError::Usage(e.to_string()),
            ModelError::Tensor(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Parse and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are success, not usage errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stats { graphs, json } => cmd_stats(&graphs, json),
        Command::Preprocess {
            graphs,
            questions,
            out,
        } => cmd_preprocess(&graphs, &questions, &out),
        Command::Train(args) => cmd_train(*args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ask(args) => cmd_ask(args, false),
        Command::Trace(args) => cmd_ask(args, true),
    }
}

fn cmd_stats(graphs: &Path, as_json: bool) -> Result<(), CliError> {
    let parsed = parse_scene_graphs(graphs)?;
    if parsed.unresolved_relation_targets > 0 {
        eprintln!(
            "warning: dropped {} relations with unresolved targets",
            parsed.unresolved_relation_targets
        );
    }
    let stats = compute_stats(parsed.graphs.values());
    if as_json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        print!("{}", stats.to_table());
    }
    Ok(())
}

fn cmd_preprocess(graphs: &Path, questions: &Path, out: &Path) -> Result<(), CliError> {
    let parsed = parse_scene_graphs(graphs)?;
    let questions = parse_questions(questions)?;
    let stats = compute_stats(parsed.graphs.values());

    let mut synthetic_edges_added = 0usize;
    let augmented: BTreeMap<String, SceneGraph> = parsed
        .graphs
        .iter()
        .map(|(id, g)| {
            synthetic_edges_added += count_unpaired_edges(g);
            (id.clone(), augment_symmetric_edges(g))
        })
        .collect();
    let vocab = Vocabulary::build(augmented.values(), &questions)
        .map_err(|e| CliError::Data(e.to_string()))?;

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("vocab.json"), vocab.to_json())?;
    std::fs::write(
        out.join("graphs.json"),
        serde_json::to_string_pretty(&augmented)?,
    )?;
    let meta = json!({
        "graph_count": augmented.len(),
        "question_count": questions.len(),
        "synthetic_edges_added": synthetic_edges_added,
        "unresolved_relation_targets": parsed.unresolved_relation_targets,
        "word_count": vocab.word_count(),
        "answer_count": vocab.answer_count(),
        "stats": stats,
    });
    std::fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    println!(
        "preprocessed {} graphs, {} questions -> {} ({} synthetic reverse edges, {} words, {} answers)",
        augmented.len(),
        questions.len(),
        out.display(),
        synthetic_edges_added,
        vocab.word_count(),
        vocab.answer_count()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut run = match &args.config {
        Some(path) => RunConfig::load(path).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(v) = args.graphs {
        run.data.graphs = Some(v);
    }
    if let Some(v) = args.questions {
        run.data.questions = Some(v);
    }
    if let Some(v) = args.val_questions {
        run.data.val_questions = Some(v);
    }
    if let Some(v) = args.embeddings {
        run.data.embeddings = Some(v);
    }
    if let Some(v) = args.out {
        run.data.out_dir = Some(v);
    }
    if let Some(v) = &args.family {
        run.train.model.family = v
            .parse()
            .map_err(CliError::Usage)?;
    }
    if let Some(v) = args.seed {
        run.train.seed = v;
    }
    if let Some(v) = args.epochs {
        run.train.epochs = v;
    }
    if let Some(v) = args.batch_size {
        run.train.batch_size = v;
    }
    if let Some(v) = args.lr {
        run.train.lr = v;
    }
    if let Some(v) = args.steps {
        run.train.model.steps = v;
    }
    if let Some(v) = args.dropout {
        run.train.model.dropout = v;
    }
    if let Some(v) = args.word_dim {
        run.train.model.word_dim = v;
    }
    if let Some(v) = args.hidden_dim {
        run.train.model.hidden_dim = v;
    }
    if let Some(v) = args.instruction_dim {
        run.train.model.instruction_dim = v;
    }
    if let Some(v) = args.gine_theta_depth {
        run.train.model.gine_theta_depth = v;
    }
    if let Some(v) = args.checkpoint_every {
        run.train.checkpoint_every = v;
    }

    let graphs_path = run
        .data
        .graphs
        .clone()
        .ok_or_else(|| CliError::Usage("missing --graphs (or data.graphs in config)".into()))?;
    let questions_path = run
        .data
        .questions
        .clone()
        .ok_or_else(|| CliError::Usage("missing --questions (or data.questions in config)".into()))?;
    let out_dir = run
        .data
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Usage("missing --out (or data.out_dir in config)".into()))?;

    let parsed = parse_scene_graphs(&graphs_path)?;
    if parsed.unresolved_relation_targets > 0 {
        eprintln!(
            "warning: dropped {} relations with unresolved targets",
            parsed.unresolved_relation_targets
        );
    }
    let train_questions = parse_questions(&questions_path)?;
    let val_questions = match &run.data.val_questions {
        Some(p) => parse_questions(p)?,
        None => Vec::new(),
    };
    let dataset = Dataset::assemble(parsed.graphs, train_questions, val_questions, None)?;

    let table = match &run.data.embeddings {
        Some(path) => {
            let rng = SplitRng::new(run.train.seed);
            let (table, coverage) = EmbeddingTable::load_pretrained(
                path,
                &dataset.vocab,
                run.train.model.word_dim,
                &rng,
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
            println!(
                "embeddings: {} pretrained rows, {} random rows",
                coverage.pretrained_rows, coverage.random_rows
            );
            Some(table)
        }
        None => None,
    };

    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("vocab.json"), dataset.vocab.to_json())?;
    std::fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(&run)?,
    )?;

    let outcome = train::train(
        &run.train,
        &dataset,
        table.as_ref(),
        &out_dir,
        args.resume.as_deref(),
    )?;
    if let Some(last) = outcome.epochs.last() {
        println!(
            "epoch {}: loss {:.4} train_acc {:.4} val_acc {} lr {:.1e}",
            last.epoch,
            last.loss,
            last.train_acc,
            last.val_acc
                .map_or("-".to_string(), |v| format!("{v:.4}")),
            last.lr
        );
    }
    println!("checkpoint: {}", outcome.final_checkpoint.display());
    Ok(())
}

struct Bundle {
    model: Model,
    params: ParamSet,
    vocab: Vocabulary,
    meta: CheckpointMeta,
}

fn load_bundle(checkpoint_path: &Path, vocab_path: Option<&Path>) -> Result<Bundle, CliError> {
    let loaded = checkpoint::load(checkpoint_path)?;
    let default_vocab = checkpoint_path
        .parent()
        .unwrap_or(Path::new("."))
        .join("vocab.json");
    let vocab_path = vocab_path.unwrap_or(&default_vocab);
    let vocab_text = std::fs::read_to_string(vocab_path)
        .map_err(|e| CliError::Data(format!("cannot read vocabulary {}: {e}", vocab_path.display())))?;
    let vocab = Vocabulary::from_json(&vocab_text)?;
    if vocab.hash() != loaded.meta.vocab_hash {
        return Err(CliError::Data(format!(
            "vocabulary {} does not match the checkpoint's vocabulary hash",
            vocab_path.display()
        )));
    }
    let model = Model::new(loaded.meta.config.model.clone())?;
    let table = EmbeddingTable::random(
        &vocab,
        model.config.word_dim,
        &SplitRng::new(loaded.meta.config.seed),
    );
    let mut params = model.init_params(&table, vocab.answer_count(), loaded.meta.config.seed)?;
    checkpoint::restore_params(&mut params, &loaded.model)?;
    Ok(Bundle {
        model,
        params,
        vocab,
        meta: loaded.meta,
    })
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let bundle = load_bundle(&args.checkpoint, args.vocab.as_deref())?;
    let parsed = parse_scene_graphs(&args.graphs)?;
    let graphs: BTreeMap<String, SceneGraph> = parsed
        .graphs
        .iter()
        .map(|(id, g)| (id.clone(), augment_symmetric_edges(g)))
        .collect();
    let questions = parse_questions(&args.questions)?;
    let (report, predictions) = train::evaluate(
        &bundle.model,
        &bundle.params,
        &bundle.vocab,
        &graphs,
        &questions,
        bundle.meta.config.batch_size,
    )?;
    print!("{}", report.to_table());
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        std::fs::write(out.join("report.txt"), report.to_table())?;
        std::fs::write(out.join("semantic_types.csv"), report.semantic_csv())?;
        std::fs::write(out.join("word_counts.csv"), report.word_count_csv())?;
        let mut lines = String::new();
        for p in &predictions {
            lines.push_str(&serde_json::to_string(&p)?);
            lines.push('\n');
        }
        std::fs::write(out.join("predictions.jsonl"), lines)?;
        println!("reports written to {}", out.display());
    }
    Ok(())
}

fn cmd_ask(args: AskArgs, want_trace: bool) -> Result<(), CliError> {
    let bundle = load_bundle(&args.checkpoint, args.vocab.as_deref())?;
    let parsed = parse_scene_graphs(&args.graphs)?;
    let graph = parsed
        .graphs
        .get(&args.graph_id)
        .ok_or_else(|| CliError::Data(format!("unknown graph id {}", args.graph_id)))?;
    let graph = augment_symmetric_edges(graph);
    let batch = GraphBatch::build(&[&graph], &bundle.vocab);
    let tokens = vec![bundle.vocab.encode_text(&args.question)];

    let out = bundle
        .model
        .forward(
            &bundle.params,
            &batch,
            &tokens,
            Mode::Eval,
            SplitRng::new(0),
            want_trace,
        )
        .map_err(CliError::from)?;
    let dist = &sgqa_core::answer::distributions(out.fwd.tape.data(out.logits))[0];
    let top5: Vec<serde_json::Value> = dist
        .top_k(5)
        .into_iter()
        .map(|(id, prob)| json!({"answer": bundle.vocab.answer_string(id), "prob": prob}))
        .collect();
    let answer_json = json!({
        "graph_id": args.graph_id,
        "question": args.question,
        "answer": bundle.vocab.answer_string(dist.predicted_id),
        "top5": top5,
    });
    println!("{}", serde_json::to_string_pretty(&answer_json)?);

    if want_trace {
        let trace = out.trace.expect("trace requested");
        let out_path = args
            .out
            .ok_or_else(|| CliError::Usage("trace requires --out".into()))?;
        std::fs::write(&out_path, serde_json::to_string_pretty(&trace)?)?;
        println!("trace written to {}", out_path.display());
    }
    Ok(())
}
