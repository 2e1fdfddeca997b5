//! End-to-end studies over a prepared corpus: filter shuffles, clustering
//! sweeps, vocabulary pruning and the pruned-vocabulary baselines.

mod base;
mod report;
mod studies;

use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusConfig, CorpusError};
use crate::embedding::{EmbeddingError, SkipGramConfig};
use crate::interpret::{InterpretError, KMeansConfig, ShuffleMode};
use crate::model::ModelError;
use crate::train::{TrainConfig, TrainError};

pub use base::{cached_basic_dir, BaseArtifacts, BasicRun};
pub use report::{
    load_report, median, write_reports, ConditionSummary, EnvMeta, PlotData, RunRow, StudyReport, TIMING_COLUMNS,
};
pub use studies::{run_baseline_suite, run_cluster_sweep, run_prune_sweep, run_shuffle_suite, run_study};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment plan: {0}")]
    Plan(String),
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(PathBuf),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Interpret(#[from] InterpretError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Shuffle,
    Cluster,
    Prune,
    Baseline,
}

impl Study {
    pub fn dir_name(self) -> &'static str {
        match self {
            Study::Shuffle => "shuffle",
            Study::Cluster => "cluster",
            Study::Prune => "prune",
            Study::Baseline => "baseline",
        }
    }
}

impl std::fmt::Display for Study {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.dir_name())
    }
}

pub const CLUSTER_KS: [usize; 9] = [1, 5, 10, 20, 100, 200, 500, 1000, 2000];
pub const PRUNE_FRACTIONS: [f64; 7] = [1.0, 0.8, 0.5, 0.1, 0.05, 0.01, 0.005];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub study: Study,
    pub seeds: Vec<u64>,
    pub corpus: CorpusConfig,
    /// Directory with `stopwords.txt` and `english_words.txt`; the shipped lists when absent.
    pub rules_dir: Option<PathBuf>,
    pub skipgram: SkipGramConfig,
    pub train: TrainConfig,
    /// Report root; each study writes to `<out_dir>/<study>/<stamp>/`.
    pub out_dir: PathBuf,
    /// Cache for the prepared corpus, embeddings and basic-model checkpoints.
    pub base_dir: Option<PathBuf>,
    pub shuffle_mode: ShuffleMode,
    pub cluster_ks: Vec<usize>,
    pub kmeans: KMeansConfig,
    pub prune_fractions: Vec<f64>,
    /// Vocabulary share for the top / random / all-except baselines.
    pub baseline_fraction: f64,
    /// Half-width of the uniform initialiser for trainable embeddings.
    pub embedding_init: f64,
    pub workers: usize,
    /// Run timed conditions one after another.
    pub serial_timing: bool,
}

impl ExperimentPlan {
    pub fn new(study: Study, data_root: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            study,
            seeds: vec![0],
            corpus: CorpusConfig::new(data_root),
            rules_dir: None,
            skipgram: SkipGramConfig::default(),
            train: TrainConfig::default(),
            out_dir: out_dir.into(),
            base_dir: None,
            shuffle_mode: ShuffleMode::Slice,
            cluster_ks: CLUSTER_KS.to_vec(),
            kmeans: KMeansConfig::default(),
            prune_fractions: PRUNE_FRACTIONS.to_vec(),
            baseline_fraction: 0.05,
            embedding_init: 0.05,
            workers: 1,
            serial_timing: false,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Plan(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if !self.corpus.data_root.is_dir() {
            return bad(format!("data root {} does not exist", self.corpus.data_root.display()));
        }
        if let Some(dir) = &self.rules_dir {
            if !dir.is_dir() {
                return bad(format!("rules directory {} does not exist", dir.display()));
            }
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.cluster_ks.is_empty() || self.cluster_ks.contains(&0) {
            return bad("cluster ks must be non-empty and positive".into());
        }
        if self.prune_fractions.is_empty() || self.prune_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("prune fractions must lie in (0, 1]".into());
        }
        if !(self.baseline_fraction > 0.0 && self.baseline_fraction < 1.0) {
            return bad("baseline fraction must lie in (0, 1)".into());
        }
        if !(self.embedding_init > 0.0) {
            return bad("embedding init must be positive".into());
        }
        self.train.validate()?;
        self.skipgram.validate()?;
        Ok(())
    }
}
