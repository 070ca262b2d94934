//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 malformed input (or bad usage),
//! 3 training failure, 4 a check that ran but did not pass.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::catalog::{Joiner, Segment};
use crate::corpus::{self, ChunkConfig, GenConfig};
use crate::document::{read_documents, write_documents, Document, DocumentError, ParseMode, SegmentStream};
use crate::experiment::{self, ExperimentConfig, ExperimentError, Method, ModelSet, Sample};
use crate::metrics;
use crate::scorer::bridge::{self, BridgeConfig, BridgeScorer};
use crate::scorer::features::{Featurizer, NumberingPatterns, DEFAULT_DIM};
use crate::scorer::linear::{read_models, write_models, ModelError, TrainConfig, FORMAT_VERSION};
use crate::scorer::{ActionScorer, LinearScorer, ScorerError};
use crate::transition::{self, decode, ActionDumpRow, DecodeError, DecodeOptions};

#[derive(Debug, Parser, Serialize)]
#[command(name = "catree", version, about = "Catalog tree extraction from ordered text segments")]
pub struct Cli {
    /// Worker threads for document-parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate synthetic documents with one segment per node.
    Generate(GenerateArgs),
    /// Split document paragraphs into OCR-like segments.
    Chunk(ChunkArgs),
    /// Seeded 8:1:1 train/dev/test split.
    Split(SplitArgs),
    /// Per-source corpus statistics.
    Stats(StatsArgs),
    /// Check that every gold tree survives oracle extraction and replay.
    OracleCheck(OracleCheckArgs),
    /// Train a model with dev-set epoch selection.
    Train(TrainArgs),
    /// Parse segment streams into catalog trees.
    Predict(PredictArgs),
    /// Tuple-level precision/recall/F1 of predictions against gold.
    Eval(EvalArgs),
    /// Serve the line-delimited bridge protocol on stdin/stdout.
    Serve(ServeArgs),
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected MIN,MAX, got `{s}`"))?;
    let lo = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<usize>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub docs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Deepest node level, as MIN,MAX.
    #[arg(long, value_parser = parse_range, default_value = "2,5")]
    pub depth_range: (usize, usize),
    #[arg(long, default_value_t = 300)]
    pub max_nodes: usize,
    #[arg(long, default_value_t = 0.2)]
    pub leaf_heading_p: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ChunkArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub chunk_p: f64,
    #[arg(long, value_parser = parse_range, default_value = "7,20")]
    pub heading_range: (usize, usize),
    #[arg(long, value_parser = parse_range, default_value = "70,100")]
    pub text_range: (usize, usize),
    #[arg(long, default_value = "none")]
    pub joiner: Joiner,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Receives train.jsonl, dev.jsonl and test.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Also write the statistics as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleCheckArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "none")]
    pub joiner: Joiner,
    /// Also write a JSON summary.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub model_out: PathBuf,
    #[arg(long, default_value = "transition")]
    pub method: Method,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 20)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    /// Inverse-frequency class weights in the loss.
    #[arg(long)]
    pub class_weights: bool,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on a seeded sample of N training documents.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long, default_value = "none")]
    pub joiner: Joiner,
    /// Heading depth covered by the baseline label sets.
    #[arg(long, default_value_t = crate::baselines::DEFAULT_MAX_DEPTH)]
    pub max_depth: usize,
    /// Extra numbering regex (anchor it with `^`); repeatable.
    #[arg(long = "pattern")]
    pub patterns: Vec<String>,
    /// Write the oracle action sequences of the training set as JSON lines.
    #[arg(long)]
    pub dump_actions: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    /// Segment streams `{"id", "segments"}` or documents with segments.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `linear:PATH` (any model file) or `bridge:COMMAND`.
    #[arg(long)]
    pub scorer: String,
    /// Only substitute structurally impossible actions.
    #[arg(long)]
    pub unconstrained: bool,
    #[arg(long, default_value = "none")]
    pub joiner: Joiner,
    /// Write per-step decode traces as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, default_value_t = bridge::DEFAULT_TIMEOUT.as_secs_f64())]
    pub bridge_timeout: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Input(String),
    Train(String),
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Input(_) => 2,
            CliError::Train(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Input(m) | CliError::Train(m) | CliError::CheckFailed(m) => m,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn doc_err(path: &Path, e: DocumentError) -> CliError {
    if e.is_schema() {
        CliError::Input(format!("{}: {e}", path.display()))
    } else {
        io_err(path, e)
    }
}

fn model_err(path: &Path, e: ModelError) -> CliError {
    match e {
        ModelError::Io(e) => io_err(path, e),
        ModelError::Format(m) => CliError::Input(format!("{}: {m}", path.display())),
    }
}

fn experiment_err(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Document(e) if !e.is_schema() => CliError::Io(e.to_string()),
        ExperimentError::Train(e) => CliError::Train(format!("training failed: {e}")),
        ExperimentError::Decode(e) => decode_err(e),
        other => CliError::Input(other.to_string()),
    }
}

fn decode_err(e: DecodeError) -> CliError {
    match e {
        DecodeError::Scorer(ScorerError::WrongHead { .. }) | DecodeError::BadSegments { .. } => CliError::Input(e.to_string()),
        other => CliError::Io(other.to_string()),
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn load_documents(path: &Path) -> CliResult<Vec<Document>> {
    read_documents(open(path)?, ParseMode::Strict).map_err(|e| doc_err(path, e))
}

fn save_documents(path: &Path, docs: &[Document]) -> CliResult<()> {
    write_documents(create(path)?, docs).map_err(|e| io_err(path, e))
}

fn save_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(io::Error::from)
        .and_then(|_| writeln!(w))
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

fn save_lines<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut w = create(path)?;
    for r in rows {
        let line = serde_json::to_string(&r).expect("rows serialize");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Run metadata written next to a command's primary output.
struct Manifest<'a> {
    cli: &'a Cli,
    started: SystemTime,
    clock: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    extra: Value,
}

impl<'a> Manifest<'a> {
    fn new(cli: &'a Cli) -> Manifest<'a> {
        Manifest {
            cli,
            started: SystemTime::now(),
            clock: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            extra: Value::Null,
        }
    }

    fn path_for(output: &Path) -> PathBuf {
        let mut name = output.file_name().map(OsString::from).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    fn write(&self, next_to: &Path) -> CliResult<()> {
        let command = serde_json::to_value(&self.cli.command).expect("arguments serialize");
        let (name, config) = match command {
            Value::Object(m) => m.into_iter().next().unwrap_or((String::new(), Value::Null)),
            other => (String::new(), other),
        };
        let seed = config.get("seed").cloned().unwrap_or(Value::Null);
        let manifest = json!({
            "command": name,
            "config": config,
            "jobs": self.cli.jobs,
            "seed": seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started_unix": self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            "wall_seconds": self.clock.elapsed().as_secs_f64(),
            "versions": {"catree": env!("CARGO_PKG_VERSION"), "model_format": FORMAT_VERSION},
            "result": self.extra,
        });
        save_json(&Manifest::path_for(next_to), &manifest)
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Chunk(a) => chunk(cli, a),
        Command::Split(a) => split(cli, a),
        Command::Stats(a) => stats(cli, a),
        Command::OracleCheck(a) => oracle_check(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Predict(a) => predict(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Serve(a) => serve(a),
    })
}

fn generate(cli: &Cli, a: &GenerateArgs) -> CliResult<()> {
    let mut m = Manifest::new(cli);
    let cfg = GenConfig {
        docs: a.docs,
        depth_range: a.depth_range,
        max_nodes: a.max_nodes,
        leaf_heading_probability: a.leaf_heading_p,
        seed: a.seed,
        ..GenConfig::default()
    };
    let docs = corpus::generate_synthetic(&cfg).map_err(|e| CliError::Input(e.to_string()))?;
    save_documents(&a.out, &docs)?;
    m.outputs.push(a.out.clone());
    m.extra = json!({"generator": cfg});
    m.write(&a.out)
}

fn chunk(cli: &Cli, a: &ChunkArgs) -> CliResult<()> {
    let mut m = Manifest::new(cli);
    let cfg = ChunkConfig {
        paragraph_chunk_probability: a.chunk_p,
        heading_piece_range: a.heading_range,
        text_piece_range: a.text_range,
        seed: a.seed,
    };
    cfg.check().map_err(|e| CliError::Input(e.to_string()))?;
    let docs = load_documents(&a.input)?;
    let chunked = corpus::chunk_corpus(&docs, &cfg, a.joiner);
    let selected: usize = chunked.iter().map(|(_, c)| c.selected).sum();
    let nodes: usize = chunked.iter().map(|(_, c)| c.nodes).sum();
    let out: Vec<Document> = chunked.into_iter().map(|(d, _)| d).collect();
    save_documents(&a.out, &out)?;
    m.inputs.push(a.input.clone());
    m.outputs.push(a.out.clone());
    m.extra = json!({"nodes": nodes, "chunked_nodes": selected});
    m.write(&a.out)
}

fn split(cli: &Cli, a: &SplitArgs) -> CliResult<()> {
    let mut m = Manifest::new(cli);
    let docs = load_documents(&a.input)?;
    let parts = corpus::split(&docs, a.seed).map_err(|e| CliError::Input(e.to_string()))?;
    fs::create_dir_all(&a.out_dir).map_err(|e| io_err(&a.out_dir, e))?;
    for (name, part) in [("train", &parts.train), ("dev", &parts.dev), ("test", &parts.test)] {
        let path = a.out_dir.join(format!("{name}.jsonl"));
        save_documents(&path, part)?;
        m.outputs.push(path);
    }
    m.inputs.push(a.input.clone());
    m.extra = json!({"train": parts.train.len(), "dev": parts.dev.len(), "test": parts.test.len()});
    m.write(&a.out_dir.join("split"))
}

fn stats(cli: &Cli, a: &StatsArgs) -> CliResult<()> {
    let mut m = Manifest::new(cli);
    let docs = load_documents(&a.input)?;
    let s = corpus::stats(&docs);
    print!("{}", s.table());
    if let Some(out) = &a.out {
        save_json(out, &s)?;
        m.inputs.push(a.input.clone());
        m.outputs.push(out.clone());
        m.write(out)?;
    }
    Ok(())
}

fn oracle_check(cli: &Cli, a: &OracleCheckArgs) -> CliResult<()> {
    let mut m = Manifest::new(cli);
    let docs = load_documents(&a.input)?;
    let failures: Vec<(usize, String)> = docs
        .par_iter()
        .enumerate()
        .filter_map(|(i, d)| round_trip(d, a.joiner).err().map(|e| (i, format!("document {}: {e}", d.id))))
        .collect();
    let summary = json!({"documents": docs.len(), "failures": failures.len()});
    if let Some(out) = &a.report {
        save_json(out, &summary)?;
        m.inputs.push(a.input.clone());
        m.outputs.push(out.clone());
        m.extra = summary;
        m.write(out)?;
    }
    match failures.first() {
        None => {
            println!("oracle round trip holds for {} documents", docs.len());
            Ok(())
        }
        Some((_, first)) => Err(CliError::CheckFailed(format!(
            "{} of {} documents fail the round trip; first counterexample: {first}",
            failures.len(),
            docs.len()
        ))),
    }
}

fn round_trip(doc: &Document, joiner: Joiner) -> Result<(), String> {
    let segments = doc.segment_list().map_err(|e| e.to_string())?;
    doc.tree.validate_against(&segments, joiner).map_err(|e| e.to_string())?;
    let steps = transition::oracle_actions(&doc.tree).map_err(|e| e.to_string())?;
    let rebuilt = transition::replay(&segments, &steps, joiner).map_err(|e| e.to_string())?;
    if rebuilt != doc.tree {
        return Err("replayed tree differs from gold".into());
    }
    Ok(())
}

fn load_samples(path: &Path) -> CliResult<Vec<Sample>> {
    let docs = load_documents(path)?;
    experiment::samples(&docs).map_err(|e| doc_err(path, e))
}

fn train(cli: &Cli, a: &TrainArgs) -> CliResult<()> {
    let mut m = Manifest::new(cli);
    let patterns = NumberingPatterns::with_extra(&a.patterns).map_err(|e| CliError::Input(format!("bad --pattern: {e}")))?;
    if a.dim < 4096 {
        return Err(CliError::Input(format!("--dim {} is too small (minimum 4096)", a.dim)));
    }
    let featurizer = Featurizer::new(a.dim, a.seed, patterns);
    let mut train_set = load_samples(&a.train)?;
    m.inputs.push(a.train.clone());
    if let Some(n) = a.subsample {
        train_set = corpus::subsample(&train_set, n, a.seed);
    }
    let dev_set = match &a.dev {
        Some(p) => {
            m.inputs.push(p.clone());
            load_samples(p)?
        }
        None => Vec::new(),
    };
    if let Some(path) = &a.dump_actions {
        dump_actions(path, &train_set, a.joiner)?;
        m.outputs.push(path.clone());
    }
    let cfg = ExperimentConfig {
        method: a.method,
        train: TrainConfig {
            learning_rate: a.lr,
            epochs: a.epochs,
            batch_size: a.batch_size,
            weight_decay: a.weight_decay,
            seed: a.seed,
            class_weighting: a.class_weights,
            ..TrainConfig::default()
        },
        joiner: a.joiner,
        max_depth: a.max_depth,
    };
    if a.max_depth == 0 {
        return Err(CliError::Input("--max-depth must be at least 1".into()));
    }
    let trained = experiment::train_method(&featurizer, &train_set, &dev_set, &cfg, |r| match r.dev_f1 {
        Some(f1) => eprintln!("epoch {:>3}  loss {:.6}  dev F1 {:.5}", r.epoch, r.train_loss, f1),
        None => eprintln!("epoch {:>3}  loss {:.6}", r.epoch, r.train_loss),
    })
    .map_err(experiment_err)?;
    eprintln!("selected epoch {}", trained.best_epoch);
    let mut w = create(&a.model_out)?;
    write_models(&mut w, &trained.models.models())
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&a.model_out, e))?;
    m.outputs.push(a.model_out.clone());
    m.extra = json!({
        "train_documents": train_set.len(),
        "dev_documents": dev_set.len(),
        "best_epoch": trained.best_epoch,
        "history": trained.history,
    });
    m.write(&a.model_out)
}

fn dump_actions(path: &Path, train: &[Sample], joiner: Joiner) -> CliResult<()> {
    let mut w = create(path)?;
    for s in train {
        let examples = transition::action_examples(&s.gold, &s.segments, joiner)
            .map_err(|e| CliError::Input(format!("document {}: {e}", s.id)))?;
        for (step, ex) in examples.iter().enumerate() {
            let row = ActionDumpRow {
                doc_id: &s.id,
                step,
                s_kind: ex.s_kind,
                s_content: &ex.s_content,
                q_content: &ex.q_content,
                gold_action: ex.action,
            };
            writeln!(w, "{}", serde_json::to_string(&row).expect("row serializes")).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One prediction input: id, source label and segments.
struct Input {
    id: String,
    source: String,
    segments: Vec<Segment>,
}

fn load_inputs(path: &Path) -> CliResult<Vec<Input>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| CliError::Input(format!("{}: line {}: {msg}", path.display(), i + 1));
        let value: Value = serde_json::from_str(&line).map_err(|e| bad(format!("malformed JSON: {e}")))?;
        let input = if value.get("root").is_some() {
            let doc = Document::from_value(&value, ParseMode::Strict).map_err(|e| bad(e.to_string()))?;
            let segments = doc.segment_list().map_err(|e| bad(e.to_string()))?;
            Input { id: doc.id, source: doc.source, segments }
        } else {
            let stream: SegmentStream = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            let segments = stream.to_segments().map_err(|e| bad(e.to_string()))?;
            Input { id: stream.id, source: String::new(), segments }
        };
        out.push(input);
    }
    Ok(out)
}

enum ScorerSpec {
    Linear(PathBuf),
    Bridge(String),
}

fn parse_scorer(spec: &str) -> CliResult<ScorerSpec> {
    if let Some(p) = spec.strip_prefix("linear:") {
        Ok(ScorerSpec::Linear(PathBuf::from(p)))
    } else if let Some(c) = spec.strip_prefix("bridge:") {
        Ok(ScorerSpec::Bridge(c.to_owned()))
    } else {
        Err(CliError::Input(format!("--scorer must be linear:PATH or bridge:COMMAND, got `{spec}`")))
    }
}

fn load_model_set(path: &Path) -> CliResult<ModelSet> {
    let models = read_models(open(path)?).map_err(|e| model_err(path, e))?;
    ModelSet::from_models(models).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn predict(cli: &Cli, a: &PredictArgs) -> CliResult<()> {
    let mut m = Manifest::new(cli);
    let inputs = load_inputs(&a.input)?;
    m.inputs.push(a.input.clone());
    let options = DecodeOptions { constrained: !a.unconstrained, joiner: a.joiner };
    let results: Vec<(crate::CatalogTree, Option<transition::DecodeTrace>)> = match parse_scorer(&a.scorer)? {
        ScorerSpec::Linear(path) => {
            m.inputs.push(path.clone());
            match load_model_set(&path)? {
                ModelSet::Transition(model) => inputs
                    .par_iter()
                    .map(|inp| {
                        let mut s = LinearScorer::new(&model)?;
                        decode(&inp.segments, &mut s, options).map(|(t, tr)| (t, Some(tr)))
                    })
                    .collect::<Result<_, DecodeError>>()
                    .map_err(decode_err)?,
                set => inputs
                    .par_iter()
                    .map(|inp| set.predict(&inp.segments, a.joiner, options.constrained).map(|t| (t, None)))
                    .collect::<Result<_, DecodeError>>()
                    .map_err(decode_err)?,
            }
        }
        ScorerSpec::Bridge(command) => {
            if !(a.bridge_timeout > 0.0 && a.bridge_timeout.is_finite()) {
                return Err(CliError::Input("--bridge-timeout must be positive".into()));
            }
            let cfg = BridgeConfig { command, timeout: Duration::from_secs_f64(a.bridge_timeout) };
            let mut scorer = BridgeScorer::spawn(&cfg).map_err(|e| CliError::Io(e.to_string()))?;
            let mut out = Vec::with_capacity(inputs.len());
            for inp in &inputs {
                let (t, tr) = decode(&inp.segments, &mut scorer as &mut dyn ActionScorer, options).map_err(decode_err)?;
                out.push((t, Some(tr)));
            }
            out
        }
    };
    let docs: Vec<Document> = inputs
        .iter()
        .zip(&results)
        .map(|(inp, (tree, _))| {
            let mut d = Document::new(inp.id.clone(), inp.source.clone(), tree.clone());
            d.segments = Some(inp.segments.iter().map(|s| s.text.clone()).collect());
            d
        })
        .collect();
    save_documents(&a.out, &docs)?;
    m.outputs.push(a.out.clone());
    let forced: usize = results.iter().filter_map(|(_, t)| t.as_ref()).map(|t| t.forced_count()).sum();
    if let Some(path) = &a.trace {
        let rows = inputs.iter().zip(&results).filter_map(|(inp, (_, tr))| {
            tr.as_ref().map(|tr| json!({"id": inp.id, "steps": tr.steps}))
        });
        save_lines(path, rows)?;
        m.outputs.push(path.clone());
    }
    m.extra = json!({"documents": docs.len(), "forced_steps": forced});
    m.write(&a.out)
}

fn eval(cli: &Cli, a: &EvalArgs) -> CliResult<()> {
    let mut m = Manifest::new(cli);
    let gold = load_documents(&a.gold)?;
    let pred = load_documents(&a.pred)?;
    if gold.len() != pred.len() {
        return Err(CliError::Input(format!("{} gold documents but {} predictions", gold.len(), pred.len())));
    }
    let mut per_doc = Vec::with_capacity(gold.len());
    for (g, p) in gold.iter().zip(&pred) {
        if g.id != p.id {
            return Err(CliError::Input(format!("document order differs: gold {} vs prediction {}", g.id, p.id)));
        }
        per_doc.push(metrics::evaluate(&g.tree, &p.tree));
    }
    let total = metrics::aggregate(&per_doc).map_err(|e| CliError::Input(e.to_string()))?;
    print!("{}", total.table());
    if let Some(out) = &a.out {
        save_json(out, &total.report())?;
        m.inputs.extend([a.gold.clone(), a.pred.clone()]);
        m.outputs.push(out.clone());
        m.write(out)?;
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> CliResult<()> {
    let set = load_model_set(&a.model)?;
    let ModelSet::Transition(model) = set else {
        return Err(CliError::Input(format!("{}: serve needs an action model", a.model.display())));
    };
    let mut scorer = LinearScorer::new(&model).map_err(|e| CliError::Input(e.to_string()))?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    bridge::serve(stdin.lock(), stdout.lock(), &mut scorer).map_err(|e| match e.kind() {
        io::ErrorKind::InvalidData => CliError::Input(format!("bad request: {e}")),
        _ => CliError::Io(e.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_parse() {
        assert_eq!(parse_range("7,20"), Ok((7, 20)));
        assert_eq!(parse_range(" 70 , 100"), Ok((70, 100)));
        assert!(parse_range("7-20").is_err());
    }

    #[test]
    fn scorer_specs() {
        assert!(matches!(parse_scorer("linear:m.bin"), Ok(ScorerSpec::Linear(p)) if p == Path::new("m.bin")));
        assert!(matches!(parse_scorer("bridge:python3 s.py"), Ok(ScorerSpec::Bridge(c)) if c == "python3 s.py"));
        assert!(matches!(parse_scorer("m.bin"), Err(CliError::Input(_))));
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(Manifest::path_for(Path::new("out/model.bin")), PathBuf::from("out/model.bin.manifest.json"));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["catree", "frobnicate"]), 2);
        assert_eq!(run(["catree", "train"]), 2);
    }

    #[test]
    fn missing_input_exits_one() {
        assert_eq!(run(["catree", "stats", "--input", "/nonexistent/file.jsonl"]), 1);
    }
}
