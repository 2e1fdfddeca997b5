//! Command-line front end. Settings come from built-in defaults, then an optional
//! TOML file, then `--set key=value` pairs, then dedicated flags.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::corpus::{prepare_corpus, FilterRules, PreparedCorpus, SplitTag, Vocabulary};
use crate::embedding::{load_word_vectors, save_word_vectors, train_skipgram_ids, EmbeddingMatrix};
use crate::experiments::{load_report, run_study, write_reports, ExperimentError, ExperimentPlan, Study};
use crate::interpret::{word_importance_fast, write_importance_tsv};
use crate::model::{build_model, count_params, load_checkpoint, save_checkpoint};
use crate::synth::{write_synthetic_corpus, SynthConfig};
use crate::train::{evaluate, train, write_trace_csv};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

macro_rules! from_via_experiment {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Experiment(e.into())
            }
        }
    )*};
}
from_via_experiment!(
    crate::corpus::CorpusError,
    crate::embedding::EmbeddingError,
    crate::model::ModelError,
    crate::train::TrainError,
    crate::interpret::InterpretError,
    std::io::Error,
    serde_json::Error
);

#[derive(Debug, Parser)]
#[command(name = "textcnn-lab", version, about = "Train a 1-D CNN sentiment classifier and study its first-layer filters")]
struct Cli {
    /// TOML settings file; section names give the dotted key prefix.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set train.epochs=3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Threads for running study conditions side by side.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run timed conditions one after another.
    #[arg(long, global = true)]
    serial_timing: bool,
    /// Review tree root.
    #[arg(long, global = true, env = "TEXTCNN_LAB_DATA")]
    data: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// Report root (defaults to `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report subdirectory name instead of a timestamp.
    #[arg(long)]
    stamp: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labelled review tree.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
    },
    /// Tokenize, build the vocabulary, split and encode a review tree.
    Preprocess {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train skip-gram vectors on a preprocessed corpus.
    EmbedTrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align an external word-vector file to a preprocessed corpus.
    EmbedLoad {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one classifier and save its checkpoint.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Word vectors; random trainable embeddings when absent.
        #[arg(long)]
        emb: Option<PathBuf>,
        #[arg(long)]
        trainable_embedding: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank every word by its first-layer importance.
    Importance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        emb: PathBuf,
        /// Vocabulary TSV (defaults to `vocab.tsv` in the checkpoint directory).
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    ShuffleExp(StudyArgs),
    ClusterExp(StudyArgs),
    PruneExp(StudyArgs),
    BaselineExp(StudyArgs),
    /// Rewrite every report file from a saved `report.json`.
    Report {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stamp: Option<String>,
    },
}

/// Everything addressable by a dotted key.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Settings {
    #[serde(flatten)]
    pub plan: ExperimentPlan,
    pub synth: SynthConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Self { plan: ExperimentPlan::new(Study::Shuffle, ".", "reports"), synth: SynthConfig::default() }
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        leaf => out.push((prefix.to_string(), leaf.clone())),
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for p in &parts[..parts.len() - 1] {
        node = node.as_object_mut().expect("known key").entry(p.to_string()).or_insert(Value::Object(Map::new()));
    }
    node.as_object_mut().expect("known key").insert(parts[parts.len() - 1].to_string(), value);
}

fn parse_toml_value(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("parsed key")).expect("toml converts"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Merge `overrides` (dotted key, value) into the defaults, rejecting unknown keys.
pub fn merge_settings(overrides: &[(String, Value)]) -> Result<Settings, CliError> {
    let mut root = serde_json::to_value(Settings::default()).expect("settings serialize");
    let mut known = Vec::new();
    flatten("", &root, &mut known);
    for (key, value) in overrides {
        if key == "study" || !known.iter().any(|(k, _)| k == key) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        set_path(&mut root, key, value.clone());
    }
    serde_json::from_value(root).map_err(|e| CliError::Config(e.to_string()))
}

fn read_overrides(cli: &Cli) -> Result<Vec<(String, Value)>, CliError> {
    let mut out = Vec::new();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        flatten("", &serde_json::to_value(table).expect("toml converts"), &mut out);
    }
    for pair in &cli.set {
        let (k, v) = pair.split_once('=').ok_or_else(|| CliError::Config(format!("`{pair}` is not KEY=VALUE")))?;
        out.push((k.trim().to_string(), parse_toml_value(v.trim())));
    }
    Ok(out)
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    Ok(std::path::absolute(p)?)
}

fn resolve_paths(plan: &mut ExperimentPlan) -> Result<(), CliError> {
    plan.corpus.data_root = absolute(&plan.corpus.data_root)?;
    plan.out_dir = absolute(&plan.out_dir)?;
    if let Some(d) = plan.rules_dir.take() {
        plan.rules_dir = Some(absolute(&d)?);
    }
    if let Some(d) = plan.base_dir.take() {
        plan.base_dir = Some(absolute(&d)?);
    }
    Ok(())
}

fn rules(plan: &ExperimentPlan) -> Result<FilterRules, CliError> {
    Ok(match &plan.rules_dir {
        Some(d) => FilterRules::from_dir(d)?,
        None => FilterRules::pinned(),
    })
}

fn require_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} does not exist", path.display())))
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut s = merge_settings(&read_overrides(&cli)?)?;
    if let Some(d) = &cli.data {
        s.plan.corpus.data_root = d.clone();
    }
    if let Some(w) = cli.workers {
        s.plan.workers = w;
    }
    s.plan.serial_timing |= cli.serial_timing;
    resolve_paths(&mut s.plan)?;
    let plan = &mut s.plan;

    match cli.command {
        Command::SynthCorpus { out } => {
            if let Some(seed) = cli.seed {
                s.synth.seed = seed;
            }
            write_synthetic_corpus(&absolute(&out)?, &s.synth)?;
            println!("{}", out.display());
        }
        Command::Preprocess { out } => {
            if let Some(seed) = cli.seed {
                plan.corpus.seed = seed;
            }
            require_dir(&plan.corpus.data_root, "data root")?;
            let corpus = prepare_corpus(&plan.corpus, &rules(plan)?)?;
            corpus.save(&out)?;
            log::info!(
                "preprocess: V={} train={} val={} test={}",
                corpus.vocab.len(),
                corpus.train.len(),
                corpus.val.len(),
                corpus.test.len()
            );
            println!("{}", out.display());
        }
        Command::EmbedTrain { corpus, out } => {
            if let Some(seed) = cli.seed {
                plan.skipgram.seed = seed;
            }
            let c = PreparedCorpus::load(&corpus, plan.corpus.seq_len)?;
            let docs: Vec<Vec<u32>> = c.train.iter().map(|d| d.ids.clone()).collect();
            let (m, report) = train_skipgram_ids(&docs, &c.vocab, &plan.skipgram)?;
            for (i, loss) in report.epoch_losses.iter().enumerate() {
                log::info!("skip-gram epoch {}: loss {loss:.6}", i + 1);
            }
            save_word_vectors(&m, &c.vocab, &out)?;
            println!("{}", out.display());
        }
        Command::EmbedLoad { vectors, corpus, out } => {
            let c = PreparedCorpus::load(&corpus, plan.corpus.seq_len)?;
            let loaded = load_word_vectors(&vectors, &c.vocab, cli.seed.unwrap_or(plan.skipgram.seed))?;
            log::info!("embed-load: {} of {} words missing from {}", loaded.missing.len(), c.vocab.len(), vectors.display());
            save_word_vectors(&loaded.matrix, &c.vocab, &out)?;
            println!("{}", out.display());
        }
        Command::Train { corpus, emb, trainable_embedding, out } => {
            if let Some(seed) = cli.seed {
                plan.train.seed = seed;
            }
            plan.train.validate()?;
            let c = PreparedCorpus::load(&corpus, plan.corpus.seq_len)?;
            let (matrix, trainable) = match &emb {
                Some(path) => (load_word_vectors(path, &c.vocab, plan.train.seed)?.matrix, trainable_embedding),
                None => (EmbeddingMatrix::random_uniform(&c.vocab, plan.skipgram.dim, plan.embedding_init, plan.train.seed), true),
            };
            let mut model = build_model(c.vocab.len(), &matrix, trainable, plan.train.seed)?;
            let run_id = format!("train-s{}", plan.train.seed);
            let report = train(
                &mut model,
                &c.encode_split(SplitTag::Train, &c.vocab),
                &c.encode_split(SplitTag::Val, &c.vocab),
                &plan.train,
                &run_id,
            )?;
            let acc = evaluate(&model, &c.encode_split(c.eval_split(), &c.vocab))?;
            save_checkpoint(&model, &out)?;
            c.vocab.write_tsv(&out.join("vocab.tsv"))?;
            report.write_json(&out.join("report.json"))?;
            write_trace_csv(&[&report], &out.join("trace.csv"))?;
            let p = count_params(&model).count;
            log::info!("{run_id}: {} accuracy {acc:.2}, params {} ({} trainable)", c.eval_split(), p.total, p.trainable);
            println!("{}", out.display());
        }
        Command::Importance { checkpoint, emb, vocab, out } => {
            if !checkpoint.join("manifest.json").is_file() {
                return Err(ExperimentError::MissingCheckpoint(checkpoint).into());
            }
            let vocab_path = vocab.unwrap_or_else(|| checkpoint.join("vocab.tsv"));
            let v = Vocabulary::read_tsv(&vocab_path)?;
            let model = load_checkpoint(&checkpoint, Some(&v))?;
            let loaded = load_word_vectors(&emb, &v, cli.seed.unwrap_or(0))?;
            if !loaded.missing.is_empty() {
                return Err(CliError::Config(format!("{} lacks {} vocabulary words", emb.display(), loaded.missing.len())));
            }
            let table = word_importance_fast(&loaded.matrix, model.conv1())?;
            write_importance_tsv(&table, &v, &out)?;
            println!("{}", out.display());
        }
        Command::ShuffleExp(a) => study(plan, Study::Shuffle, a, cli.seed)?,
        Command::ClusterExp(a) => study(plan, Study::Cluster, a, cli.seed)?,
        Command::PruneExp(a) => study(plan, Study::Prune, a, cli.seed)?,
        Command::BaselineExp(a) => study(plan, Study::Baseline, a, cli.seed)?,
        Command::Report { from, out, stamp } => {
            let report = load_report(&from)?;
            let dir = write_reports(&report, &absolute(&out)?, stamp.as_deref())?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}

fn study(plan: &mut ExperimentPlan, which: Study, args: StudyArgs, seed: Option<u64>) -> Result<(), CliError> {
    plan.study = which;
    if let Some(seed) = seed {
        plan.seeds = vec![seed];
    }
    if let Some(out) = args.out {
        plan.out_dir = absolute(&out)?;
    }
    if plan.base_dir.is_none() {
        plan.base_dir = Some(plan.out_dir.join("cache"));
    }
    plan.validate()?;
    let report = run_study(plan)?;
    let dir = write_reports(&report, &plan.out_dir, args.stamp.as_deref())?;
    println!("{}", dir.display());
    Ok(())
}

/// Parse `args` (program name first), run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
