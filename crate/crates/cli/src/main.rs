use anyhow::{anyhow, Context};
use clap::{ArgAction, Args, Parser, Subcommand};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vulngraph::corpus::{
    build_partition, ingest_commits, strictness_histogram, Commit, CorpusError, PartSet, SplitSpec, TaskKind,
};
use vulngraph::cpg::{build_graph, serialize, EdgeType, GraphOptions};
use vulngraph::harness::generator::corpus_to_jsonl;
use vulngraph::harness::{
    emit_outputs, generate_corpus, partition_splits, run_experiment, select_records, ExperimentError, ExperimentSpec,
    GeneratorSpec, GraphCache, Rq,
};
use vulngraph::metrics::{confusion, roc_auc, Entry, EntryKey, EvalReport, Scores};
use vulngraph::minilang::parse_source;
use vulngraph::model::{train, ModelConfig, ModelError, TrainedModel};

#[derive(Parser)]
#[command(name = "vulngraph", version, about = "Graph neural vulnerability detection on commit corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic commit corpus as JSON lines
    Generate(GenerateArgs),
    /// Validate a corpus and print ingestion diagnostics
    Ingest(IngestArgs),
    /// Build the cleaned P1/P2/P3 partition at one strictness level
    Partition(PartitionArgs),
    /// Print the code property graph of one function as JSON
    Graph(GraphArgs),
    /// Train a model on one partition and save a checkpoint
    Train(TrainArgs),
    /// Score a checkpoint on a partition's test split
    Eval(EvalArgs),
    /// Run one research-question protocol and write CSV and SVG outputs
    Experiment(ExperimentArgs),
    /// Re-render CSV medians and SVG plots from a report CSV
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output corpus path
    #[arg(long)]
    out: PathBuf,
    /// Generator spec (TOML); flags below override it
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of commits [default: 100]
    #[arg(long)]
    n_commits: Option<usize>,
    /// Generator seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct IngestArgs {
    /// Corpus path (JSON lines)
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Corpus path (JSON lines)
    #[arg(long)]
    corpus: PathBuf,
    /// Strictness level k
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Seed for the P3 draw, the split and the model
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory for the split manifest CSV; omitted means no file
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    /// Source file holding one function
    #[arg(long)]
    source: PathBuf,
    /// Collapse operator subtrees into their statement
    #[arg(long)]
    prune_operators: bool,
    /// Drop AST edges
    #[arg(long)]
    no_ast: bool,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Labelling task: t1 (vulnerable vs fixed, P3 safe) or t2 (changed vs random)
    #[arg(long, default_value = "t1")]
    task: TaskKind,
    /// Parts used for training
    #[arg(long, default_value = "P1+P2+P3")]
    train_combo: PartSet,
    /// Checkpoint output path
    #[arg(long)]
    out: PathBuf,
    /// Collapse operator subtrees before training
    #[arg(long)]
    prune_operators: bool,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct ModelFlags {
    #[arg(long, default_value_t = 200)]
    graph_embedding_size: usize,
    #[arg(long, default_value_t = 128)]
    node_hidden_size: usize,
    #[arg(long, default_value_t = 64)]
    token_embedding_size: usize,
    #[arg(long, default_value_t = 6)]
    propagation_steps: usize,
    /// Comma-separated subset of AST,CFG,DDG
    #[arg(long, default_value = "AST,CFG,DDG", value_delimiter = ',', value_parser = parse_edge_type)]
    edge_types: Vec<EdgeType>,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    use_smote: bool,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    use_representation_learning: bool,
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    downsample_majority: bool,
    #[arg(long = "lr", default_value_t = 0.0001)]
    learning_rate: f64,
    #[arg(long = "wd", default_value_t = 0.001)]
    weight_decay: f64,
    #[arg(long = "batch", default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 10000)]
    max_batches: usize,
    #[arg(long, default_value_t = 8)]
    grad_accumulation_steps: usize,
    /// Epochs without validation improvement before a phase stops
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, default_value_t = 5)]
    smote_neighbors: usize,
    #[arg(long, default_value_t = 128)]
    representation_size: usize,
    #[arg(long, default_value_t = 0.5)]
    triplet_margin: f64,
    #[arg(long, default_value_t = 0.5)]
    triplet_alpha: f64,
    #[arg(long, default_value_t = 0.001)]
    projection_l2: f64,
    /// Decision threshold for F1
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 5000)]
    max_vocabulary: usize,
}

impl ModelFlags {
    fn config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            graph_embedding_size: self.graph_embedding_size,
            node_hidden_size: self.node_hidden_size,
            token_embedding_size: self.token_embedding_size,
            propagation_steps: self.propagation_steps,
            edge_types_used: self.edge_types.iter().copied().collect::<BTreeSet<_>>(),
            use_smote: self.use_smote,
            use_representation_learning: self.use_representation_learning,
            downsample_majority: self.downsample_majority,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            max_batches: self.max_batches,
            grad_accumulation_steps: self.grad_accumulation_steps,
            patience: self.patience,
            seed,
            smote_neighbors: self.smote_neighbors,
            representation_size: self.representation_size,
            triplet_margin: self.triplet_margin,
            triplet_alpha: self.triplet_alpha,
            projection_l2: self.projection_l2,
            threshold: self.threshold,
            max_vocabulary: self.max_vocabulary,
        }
    }
}

fn parse_edge_type(s: &str) -> Result<EdgeType, String> {
    EdgeType::ALL
        .into_iter()
        .find(|e| e.as_str().eq_ignore_ascii_case(s.trim()))
        .ok_or_else(|| format!("unknown edge type {s:?}"))
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint written by `train`
    #[arg(long)]
    model: PathBuf,
    /// Labelling task, as for `train`
    #[arg(long, default_value = "t1")]
    task: TaskKind,
    /// Parts used for testing
    #[arg(long, default_value = "P1+P3")]
    test_combo: PartSet,
    /// Must match the setting used for training
    #[arg(long)]
    prune_operators: bool,
    /// Report CSV path; omitted means stdout only
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Research question: rq1 .. rq6
    #[arg(long)]
    rq: Rq,
    /// Corpus path (JSON lines)
    #[arg(long)]
    corpus: PathBuf,
    /// Experiment spec (TOML); flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trials per cell [default: 10 for rq1, 3 otherwise]
    #[arg(long)]
    trials: Option<usize>,
    /// Lowest k [default: 1; rq6: 4]
    #[arg(long)]
    k_min: Option<usize>,
    /// Highest k [default: 8; rq6: 4]
    #[arg(long)]
    k_max: Option<usize>,
    /// Train combo, repeatable [default: the protocol's combos]
    #[arg(long = "train-combo")]
    train_combos: Vec<PartSet>,
    /// Test combo, repeatable [default: the protocol's combos]
    #[arg(long = "test-combo")]
    test_combos: Vec<PartSet>,
    /// Experiment seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Cells trained concurrently
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Report CSV written by `experiment` or `eval`
    #[arg(long)]
    report: PathBuf,
    /// Output file prefix [default: the report's file stem]
    #[arg(long)]
    name: Option<String>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

/// A failure and its exit code.
enum Fail {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Usage(_) => 1,
            Fail::Data(_) => 2,
            Fail::Runtime(_) => 3,
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Fail {
    Fail::Usage(e.into())
}

fn data(e: impl Into<anyhow::Error>) -> Fail {
    Fail::Data(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Fail {
    Fail::Runtime(e.into())
}

fn model_fail(e: ModelError) -> Fail {
    match e {
        ModelError::Config(_) => usage(e),
        ModelError::EmptyInput | ModelError::SingleClass | ModelError::EmptyGraph | ModelError::Checkpoint(_) => {
            data(e)
        }
        ModelError::Tensor(_) => runtime(e),
    }
}

fn experiment_fail(e: ExperimentError) -> Fail {
    match e {
        ExperimentError::Spec(_) => usage(e),
        ExperimentError::Corpus(_) | ExperimentError::EmptyReport => data(e),
        ExperimentError::Model(m) => model_fail(m),
        ExperimentError::Io(_) => runtime(e),
    }
}

fn read_corpus(path: &Path) -> Result<Vec<Commit>, Fail> {
    let (commits, diag) = ingest_commits(path).map_err(data)?;
    if diag.rejected() > 0 {
        eprintln!("warning: {} of {} corpus lines rejected", diag.rejected(), diag.lines);
    }
    if commits.is_empty() {
        return Err(data(CorpusError::EmptyCorpus));
    }
    Ok(commits)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Fail> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display())).map_err(runtime)
}

fn generate(a: GenerateArgs) -> Result<(), Fail> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(data)?;
            toml::from_str::<GeneratorSpec>(&text).map_err(usage)?
        }
        None => GeneratorSpec::default(),
    };
    if let Some(n) = a.n_commits {
        spec.n_commits = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let records = generate_corpus(&spec).map_err(usage)?;
    write_file(&a.out, corpus_to_jsonl(&records))?;
    println!("wrote {} commits to {}", records.len(), a.out.display());
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<(), Fail> {
    let (commits, d) = ingest_commits(&a.corpus).map_err(data)?;
    println!("lines {}", d.lines);
    println!("accepted {}", d.accepted);
    println!("rejected_unparseable {}", d.unparseable);
    println!("rejected_identical_pair {}", d.identical_pair);
    println!("rejected_no_changes {}", d.no_changes);
    println!("rejected_duplicate_id {}", d.duplicate_id);
    for (k, n) in strictness_histogram(&commits) {
        println!("strictness {k} {n}");
    }
    if commits.is_empty() {
        return Err(data(CorpusError::EmptyCorpus));
    }
    Ok(())
}

fn partition(a: PartitionArgs) -> Result<(), Fail> {
    let commits = read_corpus(&a.data.corpus)?;
    let p = build_partition(&commits, a.data.k, a.data.seed).map_err(data)?;
    println!("k {}", p.level_k);
    println!("P1 {}", p.p1.len());
    println!("P2 {}", p.p2.len());
    println!("P3 {}", p.p3.len());
    if p.p3_short {
        println!("warning: P3 is short of |P1|+|P2|");
    }
    let c = &p.cleaning;
    println!(
        "removed within_part {}/{}/{} p2_in_p1 {} p3_in_p1_p2 {}",
        c.within_part[0], c.within_part[1], c.within_part[2], c.p2_in_p1, c.p3_in_p1_p2
    );
    if let Some(f) = p.p2_noise_fraction() {
        println!("p2_noise_fraction {f:.6}");
    }
    if let Some(dir) = a.out_dir {
        let splits = partition_splits(&commits, a.data.k, a.data.seed, &SplitSpec::default()).map_err(data)?;
        std::fs::create_dir_all(&dir).map_err(runtime)?;
        let path = dir.join(format!("partition_k{}.csv", a.data.k));
        write_file(&path, splits.manifest())?;
        println!(
            "leakage removed validation {} test {}",
            splits.validation_leakage_removed, splits.test_leakage_removed
        );
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn graph(a: GraphArgs) -> Result<(), Fail> {
    let src = std::fs::read_to_string(&a.source)
        .with_context(|| format!("reading {}", a.source.display()))
        .map_err(data)?;
    let ast = parse_source(&src).map_err(|e| data(anyhow!("{}: {e}", a.source.display())))?;
    let g = build_graph(
        &ast,
        GraphOptions {
            include_ast_edges: !a.no_ast,
            prune_operators: a.prune_operators,
        },
    );
    let bytes = serialize(&g);
    match a.out {
        Some(p) => write_file(&p, bytes),
        None => {
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}

fn train_cmd(a: TrainArgs) -> Result<(), Fail> {
    let config = a.model.config(a.data.seed);
    config.validate().map_err(model_fail)?;
    let commits = read_corpus(&a.data.corpus)?;
    let splits = partition_splits(&commits, a.data.k, a.data.seed, &SplitSpec::default()).map_err(data)?;
    let train_set = select_records(&splits.train, a.task, a.train_combo).map_err(data)?;
    let validation = select_records(&splits.validation, a.task, a.train_combo).map_err(data)?;
    let cache = GraphCache::build(&commits, a.prune_operators);
    let model = train(&cache.labelled(&train_set), &cache.labelled(&validation), &config).map_err(model_fail)?;
    write_file(&a.out, model.to_bytes())?;
    println!("train {} validation {}", train_set.len(), validation.len());
    println!("epochs {} head {:?}", model.log.epochs.len(), model.head);
    for f in &model.log.flags {
        println!("flag {f}");
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<(), Fail> {
    let bytes = std::fs::read(&a.model)
        .with_context(|| format!("reading {}", a.model.display()))
        .map_err(data)?;
    let model = TrainedModel::from_bytes(&bytes).map_err(model_fail)?;
    let commits = read_corpus(&a.data.corpus)?;
    let splits = partition_splits(&commits, a.data.k, a.data.seed, &SplitSpec::default()).map_err(data)?;
    let test = select_records(&splits.test, a.task, a.test_combo).map_err(data)?;
    let labels: Vec<u8> = test.iter().map(|r| r.label).collect();
    let cache = GraphCache::build(&commits, a.prune_operators);
    let scores = model.predict_batch(&cache.labelled(&test)).map_err(model_fail)?;
    let counts = confusion(&scores, &labels, model.config.threshold).map_err(data)?;
    let auc = roc_auc(&scores, &labels).map_err(data)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    println!("n_pos {n_pos} n_neg {}", labels.len() - n_pos);
    println!("f1 {:.6}", counts.f1());
    println!("roc_auc {auc:.6}");
    if let Some(out) = a.out {
        let mut report = EvalReport::default();
        report.push(Entry {
            key: EntryKey {
                k: a.data.k,
                train_combo: "model".into(),
                test_combo: a.test_combo.to_string(),
                trial: 0,
            },
            n_pos,
            n_neg: labels.len() - n_pos,
            scores: Some(Scores {
                f1: counts.f1(),
                roc_auc: auc,
                counts,
            }),
            flag: None,
        });
        write_file(&out, report.to_csv())?;
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<(), Fail> {
    let mut spec = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(data)?;
            let spec = ExperimentSpec::from_toml(&text).map_err(experiment_fail)?;
            if spec.rq != a.rq {
                return Err(usage(anyhow!("--rq {} disagrees with config rq {}", a.rq, spec.rq)));
            }
            spec
        }
        None => ExperimentSpec::for_rq(a.rq),
    };
    if let Some(t) = a.trials {
        spec.trials = t;
    }
    if let Some(k) = a.k_min {
        spec.k_range.0 = k;
    }
    if let Some(k) = a.k_max {
        spec.k_range.1 = k;
    }
    if !a.train_combos.is_empty() {
        spec.train_combos = a.train_combos;
    }
    if !a.test_combos.is_empty() {
        spec.test_combos = a.test_combos;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    spec.validate().map_err(experiment_fail)?;
    if a.jobs == 0 {
        return Err(usage(anyhow!("--jobs must be positive")));
    }
    let commits = read_corpus(&a.corpus)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build().map_err(runtime)?;
    let report = pool.install(|| run_experiment(&commits, &spec)).map_err(experiment_fail)?;
    let paths = emit_outputs(&report, spec.rq.as_str(), &a.out_dir).map_err(experiment_fail)?;
    let flagged = report.entries.iter().filter(|e| e.flag.is_some()).count();
    println!("{} entries, {flagged} flagged", report.entries.len());
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn plot(a: PlotArgs) -> Result<(), Fail> {
    let text = std::fs::read_to_string(&a.report)
        .with_context(|| format!("reading {}", a.report.display()))
        .map_err(data)?;
    let report = EvalReport::from_csv(&text).map_err(|e| data(anyhow!(e)))?;
    let name = match a.name {
        Some(n) => n,
        None => a
            .report
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "report".into()),
    };
    for p in emit_outputs(&report, &name, &a.out_dir).map_err(experiment_fail)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Ingest(a) => ingest(a),
        Command::Partition(a) => partition(a),
        Command::Graph(a) => graph(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Fail::Usage(e) | Fail::Data(e) | Fail::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
