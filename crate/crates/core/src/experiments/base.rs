use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{ExperimentError, ExperimentPlan};
use crate::corpus::{prepare_corpus, FilterRules, PreparedCorpus, SplitTag};
use crate::embedding::{load_word_vectors, save_word_vectors, train_skipgram_ids, EmbeddingMatrix};
use crate::model::{build_model, load_checkpoint, save_checkpoint, SentimentCNN};
use crate::train::{evaluate, train, TrainConfig, TrainReport};

/// A basic model (frozen corpus embeddings) trained with one seed.
#[derive(Debug, Clone)]
pub struct BasicRun {
    pub seed: u64,
    pub model: SentimentCNN<f32>,
    pub report: TrainReport,
    pub test_acc: f64,
}

/// Everything the studies share: the prepared corpus, its embeddings and one basic model per seed.
#[derive(Debug, Clone)]
pub struct BaseArtifacts {
    pub corpus: PreparedCorpus,
    pub embedding: EmbeddingMatrix,
    pub basic: Vec<BasicRun>,
}

fn fingerprint<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("plan serializes");
    Sha256::digest(json).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub(super) fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool")
}

pub(super) fn seeded(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.clone() }
}

impl BaseArtifacts {
    /// Build (or reload from `plan.base_dir`) the corpus, embeddings and basic models for every seed.
    pub fn prepare(plan: &ExperimentPlan) -> Result<Self, ExperimentError> {
        plan.validate()?;
        let data_key = fingerprint(&(&plan.corpus, &plan.rules_dir, &plan.skipgram));
        let cache = plan.base_dir.as_ref().map(|d| d.join(format!("data-{data_key}")));
        let (corpus, embedding) = match &cache {
            Some(dir) if dir.join("embedding.vec").is_file() => {
                let corpus = PreparedCorpus::load(&dir.join("corpus"), plan.corpus.seq_len)?;
                let loaded = load_word_vectors(&dir.join("embedding.vec"), &corpus.vocab, plan.skipgram.seed)?;
                if !loaded.missing.is_empty() {
                    return Err(ExperimentError::Plan(format!("cached embeddings lack {} words", loaded.missing.len())));
                }
                log::info!("reusing prepared corpus and embeddings from {}", dir.display());
                (corpus, loaded.matrix)
            }
            _ => {
                let rules = match &plan.rules_dir {
                    Some(dir) => FilterRules::from_dir(dir)?,
                    None => FilterRules::pinned(),
                };
                let corpus = prepare_corpus(&plan.corpus, &rules)?;
                let docs: Vec<Vec<u32>> = corpus.train.iter().map(|d| d.ids.clone()).collect();
                let (embedding, sg) = train_skipgram_ids(&docs, &corpus.vocab, &plan.skipgram)?;
                log::info!("skip-gram losses {:?}", sg.epoch_losses);
                if let Some(dir) = &cache {
                    corpus.save(&dir.join("corpus"))?;
                    save_word_vectors(&embedding, &corpus.vocab, &dir.join("embedding.vec"))?;
                }
                (corpus, embedding)
            }
        };
        let train_key = fingerprint(&plan.train);
        let pool = thread_pool(plan.workers);
        let basic = pool.install(|| {
            plan.seeds
                .par_iter()
                .map(|&seed| {
                    let dir = cache.as_ref().map(|d| d.join(format!("basic-{train_key}-s{seed}")));
                    basic_run(&corpus, &embedding, &plan.train, seed, dir.as_deref())
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        Ok(Self { corpus, embedding, basic })
    }

    pub fn basic(&self, seed: u64) -> Option<&BasicRun> {
        self.basic.iter().find(|b| b.seed == seed)
    }
}

fn basic_run(
    corpus: &PreparedCorpus,
    embedding: &EmbeddingMatrix,
    cfg: &TrainConfig,
    seed: u64,
    cache: Option<&Path>,
) -> Result<BasicRun, ExperimentError> {
    let test = corpus.encode_split(corpus.eval_split(), &corpus.vocab);
    if let Some(dir) = cache.filter(|d| d.join("report.json").is_file()) {
        let model = load_checkpoint(dir, Some(&corpus.vocab))?;
        let report: TrainReport = serde_json::from_str(&fs::read_to_string(dir.join("report.json"))?)?;
        let test_acc = evaluate(&model, &test)?;
        return Ok(BasicRun { seed, model, report, test_acc });
    }
    let mut model = build_model(corpus.vocab.len(), embedding, false, seed)?;
    let train_set = corpus.encode_split(SplitTag::Train, &corpus.vocab);
    let val_set = corpus.encode_split(SplitTag::Val, &corpus.vocab);
    let report = train(&mut model, &train_set, &val_set, &seeded(cfg, seed), &format!("basic-s{seed}"))?;
    let test_acc = evaluate(&model, &test)?;
    if let Some(dir) = cache {
        save_checkpoint(&model, dir)?;
        corpus.vocab.write_tsv(&dir.join("vocab.tsv"))?;
        fs::write(dir.join("report.json"), serde_json::to_string(&report)?)?;
    }
    Ok(BasicRun { seed, model, report, test_acc })
}

/// Checkpoint directory of the basic model for `seed` inside a base cache, if one was written.
pub fn cached_basic_dir(plan: &ExperimentPlan, seed: u64) -> Option<PathBuf> {
    let data_key = fingerprint(&(&plan.corpus, &plan.rules_dir, &plan.skipgram));
    let dir = plan.base_dir.as_ref()?.join(format!("data-{data_key}")).join(format!("basic-{}-s{seed}", fingerprint(&plan.train)));
    dir.join("manifest.json").is_file().then_some(dir)
}
