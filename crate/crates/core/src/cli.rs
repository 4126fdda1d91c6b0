//! `misdetect` command line.
//!
//! Exit codes: 0 success, 1 i/o failure, 2 usage, 3 invalid config,
//! 4 missing input file, 5 bad input data, 6 training divergence.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{self, CorpusReport, Platform, RawPost, RecordIoError, Split, SplitManifest};
use crate::deskdata;
use crate::encoder::{checkpoint, CheckpointError, ModelParams};
use crate::pipeline::{self, ConfigError, PipelineError, Prepared, RunConfig};
use crate::quant;
use crate::runtime::{self, BundleError, Engine, FeedPost, RuntimeError, SessionState};
use crate::tokenizer::{Vocab, VocabError};
use crate::train::{ThresholdCalibration, TrainError};

pub const RAW_POSTS: &str = "raw_posts.jsonl";
pub const RECORDS: &str = "records.jsonl";
pub const SPLITS: &str = "splits.txt";
pub const VOCAB: &str = "vocab.txt";
pub const CORPUS_REPORT: &str = "corpus_report.json";
pub const CHECKPOINT: &str = "model.mdck";
pub const QUANT_CHECKPOINT: &str = "model.mdq8";
pub const HISTORY: &str = "history.json";
pub const CALIBRATION: &str = "calibration.json";
pub const QUANT_CALIBRATION: &str = "calibration_quant.json";
pub const SIZE_REPORT: &str = "size_report.json";
pub const BUNDLE_DIR: &str = "bundle";

#[derive(Debug, Parser)]
#[command(name = "misdetect", version, about = "On-device misinformation detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `out_dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic desk corpus as raw post records.
    GenDesk {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Gate, dedup and split the corpora; build the vocabulary.
    Prepare(RunArgs),
    /// Run the three-stage curriculum and calibrate the threshold on Dev.
    Train(RunArgs),
    /// Quantize the trained checkpoint to INT8.
    Quantize(RunArgs),
    /// Score a split and write a metrics report.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "Test")]
        split: Split,
        /// Use the float checkpoint even when quantization is on.
        #[arg(long)]
        float: bool,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Package the quantized model, vocabulary, config and threshold.
    ExportBundle {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Classify posts and write one verdict per line.
    Classify {
        #[arg(long)]
        bundle: PathBuf,
        /// Plain text (one post per line) or JSON records with a `text` field.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Measure per-post latency over a post file.
    Bench {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        posts: PathBuf,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// prepare, train, quantize, eval and export-bundle in one go.
    Run(RunArgs),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("bad input: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 3,
            CliError::MissingFile(_) => 4,
            CliError::Data(_) => 5,
            CliError::Diverged(_) => 6,
        }
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    if e.kind() == io::ErrorKind::NotFound {
        CliError::MissingFile(path.to_path_buf())
    } else {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<RecordIoError> for CliError {
    fn from(e: RecordIoError) -> Self {
        match e {
            RecordIoError::Io { path, source } => io_error(&path, source),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Train(TrainError::Diverged { stage, .. }) => CliError::Diverged(format!("non-finite loss for a whole epoch in {stage}")),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<VocabError> for CliError {
    fn from(e: VocabError) -> Self {
        match e {
            VocabError::Io { path, source } => io_error(Path::new(&path), source),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<BundleError> for CliError {
    fn from(e: BundleError) -> Self {
        match e {
            BundleError::Io { path, source } => io_error(&path, source),
            BundleError::Vocab(v) => v.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<RuntimeError> for CliError {
    fn from(e: RuntimeError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| io_error(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    write(path, &s)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_slice(&read(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Loads the config file (if any), applies flag overrides, validates, and
/// pushes the top-level seed into every seeded component.
fn load_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = String::from_utf8(read(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let raw: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            raw
        }
        None => RunConfig::default(),
    };
    if let Some(o) = &args.out_dir {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.desk.seed = cfg.seed;
    cfg.split.seed = cfg.seed;
    cfg.plan.seed = cfg.seed;
    cfg.validate()?;
    for p in &cfg.corpora {
        if !p.is_file() {
            return Err(CliError::MissingFile(p.clone()));
        }
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: Option<String>,
    inputs: BTreeMap<String, String>,
    artifacts: BTreeMap<String, String>,
}

fn hashes(root: &Path, paths: &[PathBuf]) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for p in paths {
        let key = p.strip_prefix(root).unwrap_or(p).display().to_string();
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| io_error(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            entries.sort();
            out.extend(hashes(root, &entries)?);
        } else {
            out.insert(key, runtime::sha256_hex(&read(p)?));
        }
    }
    Ok(out)
}

/// `manifest_<command>.json` next to the outputs: config snapshot, seed
/// and sha256 of every input and artifact. No timestamps, so reruns with
/// the same inputs produce the same bytes.
fn write_manifest(dir: &Path, command: &str, cfg: Option<&RunConfig>, seed: u64, inputs: &[PathBuf], artifacts: &[PathBuf]) -> Result<PathBuf, CliError> {
    let m = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config: cfg.map(RunConfig::to_toml),
        inputs: hashes(dir, inputs)?,
        artifacts: hashes(dir, artifacts)?,
    };
    let path = dir.join(format!("manifest_{}.json", command.replace('-', "_")));
    write_json(&path, &m)?;
    Ok(path)
}

fn load_prepared(out: &Path) -> Result<Prepared, CliError> {
    let records = corpus::read_clean_records(&out.join(RECORDS))?;
    let splits_path = out.join(SPLITS);
    let text = String::from_utf8(read(&splits_path)?).map_err(|e| CliError::Data(e.to_string()))?;
    let manifest = SplitManifest::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", splits_path.display())))?;
    let vocab = Vocab::load(&out.join(VOCAB))?;
    Ok(Prepared {
        records,
        report: CorpusReport::default(),
        manifest,
        vocab,
    })
}

fn load_float(out: &Path) -> Result<ModelParams, CliError> {
    Ok(checkpoint::from_bytes(&read(&out.join(CHECKPOINT))?)?)
}

fn load_quant(out: &Path) -> Result<quant::QuantModel, CliError> {
    Ok(quant::from_bytes(&read(&out.join(QUANT_CHECKPOINT))?)?)
}

fn cmd_gen_desk(cfg: &RunConfig, output: Option<PathBuf>) -> Result<(), CliError> {
    let path = output.unwrap_or_else(|| cfg.out_dir.join(RAW_POSTS));
    let corpus = deskdata::generate(&cfg.desk).map_err(|e| CliError::Config(format!("desk: {e}")))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    corpus::write_raw_posts(&path, &corpus.posts)?;
    println!("wrote {} posts to {}", corpus.posts.len(), path.display());
    Ok(())
}

fn cmd_prepare(cfg: &RunConfig) -> Result<(), CliError> {
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mut inputs = cfg.corpora.clone();
    let posts: Vec<RawPost> = if cfg.corpora.is_empty() {
        let corpus = deskdata::generate(&cfg.desk).map_err(|e| CliError::Config(format!("desk: {e}")))?;
        let raw = out.join(RAW_POSTS);
        corpus::write_raw_posts(&raw, &corpus.posts)?;
        inputs.push(raw);
        corpus.posts
    } else {
        let mut all = Vec::new();
        for p in &cfg.corpora {
            all.extend(corpus::read_raw_posts(p)?);
        }
        all
    };
    let prepared = pipeline::prepare(&posts, &cfg.gates, &cfg.split, cfg.vocab_size)?;
    corpus::write_clean_records(&out.join(RECORDS), &prepared.records)?;
    write(&out.join(SPLITS), prepared.manifest.to_text().as_bytes())?;
    prepared.vocab.save(&out.join(VOCAB))?;
    write_json(&out.join(CORPUS_REPORT), &prepared.report)?;
    let artifacts: Vec<PathBuf> = [RECORDS, SPLITS, VOCAB, CORPUS_REPORT].iter().map(|f| out.join(f)).collect();
    write_manifest(out, "prepare", Some(cfg), cfg.seed, &inputs, &artifacts)?;
    println!("prepared {} records, vocabulary of {}", prepared.records.len(), prepared.vocab.len());
    for s in Split::ALL {
        let st = prepared.manifest.stats(s);
        println!("  {s}: {} rows, {:.1}% misinformation", st.count, 100.0 * st.prevalence());
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let out = &cfg.out_dir;
    let prepared = load_prepared(out)?;
    let (params, history) = match pipeline::train_model(&prepared, &cfg.model, &cfg.plan, cfg.seed) {
        Err(PipelineError::Train(TrainError::Diverged { stage, history })) => {
            write_json(&out.join(HISTORY), &history)?;
            return Err(CliError::Diverged(format!("non-finite loss for a whole epoch in {stage}")));
        }
        r => r?,
    };
    write(&out.join(CHECKPOINT), &checkpoint::to_bytes(&params))?;
    write_json(&out.join(HISTORY), &history)?;
    let dev = prepared.examples(Split::Dev, params.config.max_len);
    let cal = pipeline::calibrate(&Engine::Float(params), &dev)?;
    write_json(&out.join(CALIBRATION), &cal)?;
    let inputs: Vec<PathBuf> = [RECORDS, SPLITS, VOCAB].iter().map(|f| out.join(f)).collect();
    let artifacts: Vec<PathBuf> = [CHECKPOINT, HISTORY, CALIBRATION].iter().map(|f| out.join(f)).collect();
    write_manifest(out, "train", Some(cfg), cfg.seed, &inputs, &artifacts)?;
    for e in &history.epochs {
        println!(
            "{} epoch {}: loss {:.4}, dev macro-F1 {:.4} (τ={:.2})",
            e.stage, e.stage_epoch, e.train_loss, e.dev_macro_f1, e.dev_tau
        );
    }
    for ev in &history.events {
        println!("  {ev}");
    }
    let best = history.best().expect("at least one epoch");
    println!("kept epoch {} ({} epoch {}); calibrated τ={:.2}", best.epoch, best.stage, best.stage_epoch, cal.tau);
    Ok(())
}

fn cmd_quantize(cfg: &RunConfig) -> Result<(), CliError> {
    let out = &cfg.out_dir;
    let params = load_float(out)?;
    let (qm, report) = quant::quantize_model(&params).map_err(|e| CliError::Data(e.to_string()))?;
    write(&out.join(QUANT_CHECKPOINT), &quant::to_bytes(&qm))?;
    write_json(&out.join(SIZE_REPORT), &report)?;
    let prepared = load_prepared(out)?;
    let dev = prepared.examples(Split::Dev, qm.config.max_len);
    let cal = pipeline::calibrate(&Engine::Quant(qm), &dev)?;
    write_json(&out.join(QUANT_CALIBRATION), &cal)?;
    let artifacts: Vec<PathBuf> = [QUANT_CHECKPOINT, SIZE_REPORT, QUANT_CALIBRATION].iter().map(|f| out.join(f)).collect();
    write_manifest(out, "quantize", Some(cfg), cfg.seed, &[out.join(CHECKPOINT)], &artifacts)?;
    println!(
        "linear weights {} → {} bytes ({:.2}×); files {} → {} bytes ({:.2}×)",
        report.covered_f32_bytes, report.covered_quant_bytes, report.covered_ratio, report.f32_file_bytes, report.quant_file_bytes, report.file_ratio
    );
    Ok(())
}

/// Engine and threshold for the configured deployment: quantized unless
/// disabled, threshold from the config override or the matching calibration.
fn deployed(cfg: &RunConfig, force_float: bool) -> Result<(Engine, f64, PathBuf), CliError> {
    let out = &cfg.out_dir;
    let (engine, cal_file, model_file) = if cfg.quantize && !force_float {
        (Engine::Quant(load_quant(out)?), QUANT_CALIBRATION, QUANT_CHECKPOINT)
    } else {
        (Engine::Float(load_float(out)?), CALIBRATION, CHECKPOINT)
    };
    let tau = match cfg.tau {
        Some(t) => t,
        None => read_json::<ThresholdCalibration>(&out.join(cal_file))?.tau,
    };
    Ok((engine, tau, out.join(model_file)))
}

fn cmd_eval(cfg: &RunConfig, split: Split, float: bool, tau: Option<f64>) -> Result<(), CliError> {
    let out = &cfg.out_dir;
    let (engine, cal_tau, model_path) = deployed(cfg, float)?;
    let tau = tau.unwrap_or(cal_tau);
    if !(0.0..=1.0).contains(&tau) {
        return Err(CliError::Config(format!("tau: {tau} is outside [0, 1]")));
    }
    let prepared = load_prepared(out)?;
    let examples = prepared.examples(split, engine.config().max_len);
    let (report, _) = pipeline::evaluate_examples(&engine, &examples, tau)?;
    let kind = if matches!(engine, Engine::Quant(_)) { "quant" } else { "float" };
    let name = format!("metrics_{}_{kind}.json", split.name().to_lowercase());
    #[derive(Serialize)]
    struct Out<'a> {
        split: Split,
        model: &'a str,
        seed: u64,
        #[serde(flatten)]
        metrics: &'a crate::eval::MetricsReport,
    }
    write_json(
        &out.join(&name),
        &Out {
            split,
            model: kind,
            seed: cfg.seed,
            metrics: &report,
        },
    )?;
    write_manifest(out, &format!("eval-{}-{kind}", split.name().to_lowercase()), Some(cfg), cfg.seed, &[model_path, out.join(RECORDS), out.join(SPLITS)], &[out.join(&name)])?;
    println!(
        "{split} ({kind}, τ={tau:.2}): accuracy {:.4}, macro-F1 {:.4}, AUROC {}",
        report.accuracy,
        report.macro_f1,
        report.auroc.map_or("n/a".into(), |a| format!("{a:.4}"))
    );
    let c = report.confusion;
    println!("  tp {} fp {} tn {} fn {}", c.tp, c.fp, c.tn, c.fn_);
    Ok(())
}

fn cmd_export(cfg: &RunConfig, dest: Option<PathBuf>) -> Result<(), CliError> {
    let out = &cfg.out_dir;
    let dest = dest.unwrap_or_else(|| out.join(BUNDLE_DIR));
    let qm = load_quant(out)?;
    let vocab = Vocab::load(&out.join(VOCAB))?;
    let tau = match cfg.tau {
        Some(t) => t,
        None => read_json::<ThresholdCalibration>(&out.join(QUANT_CALIBRATION))?.tau,
    };
    let m = runtime::export_bundle(&dest, &qm, &vocab, &cfg.gates, tau, cfg.seed)?;
    write_manifest(out, "export-bundle", Some(cfg), cfg.seed, &[out.join(QUANT_CHECKPOINT), out.join(VOCAB)], std::slice::from_ref(&dest))?;
    println!("bundle written to {} (τ={:.2}, {} files)", dest.display(), m.tau, m.files.len() + 1);
    Ok(())
}

/// Reads posts: JSON objects (`post_id` or `id`, `text`, optional
/// `platform`) or plain text lines, whose id is the line number.
pub fn read_feed(path: &Path) -> Result<Vec<FeedPost>, CliError> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut posts = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| CliError::Data(format!("{}:{}: {m}", path.display(), i + 1));
        let post = if line.trim_start().starts_with('{') {
            let v: Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            let text = v.get("text").and_then(Value::as_str).ok_or_else(|| bad("no \"text\" field".into()))?;
            let id = v
                .get("post_id")
                .or_else(|| v.get("id"))
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| (i + 1).to_string());
            let platform: Platform = match v.get("platform") {
                Some(p) => serde_json::from_value(p.clone()).map_err(|e| bad(e.to_string()))?,
                None => Platform::Other,
            };
            FeedPost {
                post_id: id,
                platform,
                text: text.to_string(),
            }
        } else {
            FeedPost {
                post_id: (i + 1).to_string(),
                platform: Platform::Other,
                text: line,
            }
        };
        posts.push(post);
    }
    Ok(posts)
}

fn cmd_classify(bundle: &Path, input: &Path, output: Option<PathBuf>) -> Result<(), CliError> {
    let (classifier, manifest) = runtime::load_bundle(bundle)?;
    let posts = read_feed(input)?;
    let mut session = SessionState::new(manifest.tau)?;
    let mut lines = Vec::new();
    for post in &posts {
        let v = runtime::classify_post(&mut session, &classifier, post)?;
        lines.extend(serde_json::to_vec(&v).expect("verdict serializes"));
        lines.push(b'\n');
    }
    match output {
        Some(p) => write(&p, &lines)?,
        None => io::stdout().write_all(&lines).map_err(|e| CliError::Io(e.to_string()))?,
    }
    Ok(())
}

fn cmd_bench(bundle: &Path, posts: &Path, warmup: usize, output: Option<PathBuf>) -> Result<(), CliError> {
    let (classifier, manifest) = runtime::load_bundle(bundle)?;
    let feed = read_feed(posts)?;
    let report = runtime::bench(&classifier, &feed, manifest.tau, warmup)?;
    #[derive(Serialize)]
    struct Out<'a> {
        seed: u64,
        model: &'a str,
        #[serde(flatten)]
        report: &'a runtime::BenchReport,
    }
    let body = Out {
        seed: manifest.seed,
        model: "quant",
        report: &report,
    };
    match output {
        Some(p) => write_json(&p, &body)?,
        None => println!("{}", serde_json::to_string_pretty(&body).expect("serializable")),
    }
    let s = report.stats;
    eprintln!(
        "{} posts after {} warmup: median {:.3} ms, p90 {:.3} ms, p99 {:.3} ms, mean {:.3} ms",
        s.count, warmup, s.median, s.p90, s.p99, s.mean
    );
    Ok(())
}

fn run_command(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenDesk { run, output } => cmd_gen_desk(&load_config(&run)?, output),
        Command::Prepare(run) => cmd_prepare(&load_config(&run)?),
        Command::Train(run) => cmd_train(&load_config(&run)?),
        Command::Quantize(run) => cmd_quantize(&load_config(&run)?),
        Command::Eval { run, split, float, tau } => cmd_eval(&load_config(&run)?, split, float, tau),
        Command::ExportBundle { run, dest } => cmd_export(&load_config(&run)?, dest),
        Command::Classify { bundle, input, output } => cmd_classify(&bundle, &input, output),
        Command::Bench { bundle, posts, warmup, output } => cmd_bench(&bundle, &posts, warmup, output),
        Command::Run(run) => {
            let cfg = load_config(&run)?;
            cmd_prepare(&cfg)?;
            cmd_train(&cfg)?;
            if cfg.quantize {
                cmd_quantize(&cfg)?;
            }
            cmd_eval(&cfg, Split::Test, false, None)?;
            if cfg.quantize {
                cmd_export(&cfg, None)?;
            }
            Ok(())
        }
    }
}
