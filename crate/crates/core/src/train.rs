//! Mini-batch training loop, evaluation and training reports.

use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EncodedDataset;
use crate::model::{count_params, ModelError, ModelGrads, ParamCount, SentimentCNN};
use crate::nnkernel::{AdamConfig, AdamState, KernelError, ParamRef};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training settings: {0}")]
    Config(String),
    #[error("{0} set is empty")]
    EmptyDataset(&'static str),
    #[error("dataset was encoded with vocabulary {dataset}, model expects {model}")]
    VocabMismatch { dataset: String, model: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub decay: f64,
    pub batch: usize,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
    /// Accuracy trace points per epoch.
    pub trace_points: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 5, lr0: 0.001, decay: 0.7, batch: 64, seed: 0, shuffle_each_epoch: true, trace_points: 20 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(TrainError::Config("batch must be at least 1".into()));
        }
        if self.trace_points == 0 {
            return Err(TrainError::Config("trace_points must be at least 1".into()));
        }
        self.adam().validate().map_err(|e| TrainError::Config(e.to_string()))
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr0: self.lr0, decay: self.decay, ..AdamConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    /// Wall-clock seconds spent in forward/backward/optimizer steps.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub epoch_fraction: f64,
    /// Accuracy over the training examples seen so far in the current epoch.
    pub train_acc: f64,
    pub val_acc: f64,
    pub seconds_elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub run_id: String,
    pub epochs: Vec<EpochStats>,
    pub trace: Vec<TracePoint>,
    pub params: ParamCount,
}

impl TrainReport {
    pub fn final_train_acc(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.train_acc)
    }

    pub fn final_val_acc(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.val_acc)
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum::<f64>() / self.epochs.len().max(1) as f64
    }

    /// Summary without the per-point trace.
    pub fn write_json(&self, path: &Path) -> Result<(), TrainError> {
        #[derive(Serialize)]
        struct Summary<'a> {
            run_id: &'a str,
            params: ParamCount,
            epochs: &'a [EpochStats],
            final_train_acc: f64,
            final_val_acc: f64,
            mean_epoch_seconds: f64,
        }
        let s = Summary {
            run_id: &self.run_id,
            params: self.params,
            epochs: &self.epochs,
            final_train_acc: self.final_train_acc(),
            final_val_acc: self.final_val_acc(),
            mean_epoch_seconds: self.mean_epoch_seconds(),
        };
        fs::write(path, serde_json::to_string_pretty(&s).expect("summary serializes") + "\n")?;
        Ok(())
    }
}

/// One CSV row per trace point of every report.
pub fn write_trace_csv(reports: &[&TrainReport], path: &Path) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run_id", "epoch_fraction", "train_acc", "val_acc", "seconds_elapsed"])?;
    for r in reports {
        for p in &r.trace {
            w.write_record([
                r.run_id.clone(),
                format!("{:.2}", p.epoch_fraction),
                format!("{:.4}", p.train_acc),
                format!("{:.4}", p.val_acc),
                format!("{:.6}", p.seconds_elapsed),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

const EVAL_CHUNK: usize = 256;

/// Positive-class probabilities for every review.
pub fn predict(model: &SentimentCNN<f32>, dataset: &EncodedDataset) -> Result<Vec<f32>, TrainError> {
    let mut out = Vec::with_capacity(dataset.len());
    for chunk in dataset.reviews.chunks(EVAL_CHUNK) {
        let batch: Vec<&[u32]> = chunk.iter().map(|r| r.ids.as_slice()).collect();
        out.extend(model.forward(&batch)?);
    }
    Ok(out)
}

/// Percentage of reviews classified correctly; p ≥ 0.5 counts as positive.
pub fn accuracy_from_probs(probs: &[f32], labels: impl Iterator<Item = bool>) -> f64 {
    let mut correct = 0usize;
    let mut n = 0usize;
    for (p, y) in probs.iter().zip(labels) {
        correct += usize::from((*p >= 0.5) == y);
        n += 1;
    }
    100.0 * correct as f64 / n.max(1) as f64
}

pub fn evaluate(model: &SentimentCNN<f32>, dataset: &EncodedDataset) -> Result<f64, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset("evaluation"));
    }
    check_vocab(model, dataset)?;
    let probs = predict(model, dataset)?;
    Ok(accuracy_from_probs(&probs, dataset.reviews.iter().map(|r| r.label.is_positive())))
}

fn check_vocab(model: &SentimentCNN<f32>, dataset: &EncodedDataset) -> Result<(), TrainError> {
    if &dataset.vocab_hash != model.vocab_hash() {
        return Err(TrainError::VocabMismatch { dataset: dataset.vocab_hash.0.clone(), model: model.vocab_hash().0.clone() });
    }
    Ok(())
}

/// Train `model` in place with Adam. Frozen layers are never written.
pub fn train(
    model: &mut SentimentCNN<f32>,
    train_set: &EncodedDataset,
    val_set: &EncodedDataset,
    cfg: &TrainConfig,
    run_id: &str,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    check_vocab(model, train_set)?;
    check_vocab(model, val_set)?;

    let n = train_set.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState::new(cfg.adam(), &model.block_sizes())?;
    let mut grads = ModelGrads::zeros_like(model);
    let trainable = model.block_trainable();
    let mut report =
        TrainReport { run_id: run_id.to_string(), epochs: Vec::new(), trace: Vec::new(), params: count_params(model).count };
    let mut elapsed = 0.0f64;

    for epoch in 0..cfg.epochs {
        if cfg.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        let (mut seen, mut correct, mut loss_sum) = (0usize, 0usize, 0.0f64);
        let mut next_point = 1usize;
        let mut epoch_seconds = 0.0f64;
        for idx in order.chunks(cfg.batch) {
            let batch: Vec<&[u32]> = idx.iter().map(|&i| train_set.reviews[i].ids.as_slice()).collect();
            let labels: Vec<f32> = idx.iter().map(|&i| f32::from(train_set.reviews[i].label.as_u8())).collect();

            let start = Instant::now();
            let out = model.loss_and_grads(&batch, &labels, &mut grads)?;
            let mut params: Vec<ParamRef<'_, f32>> = model
                .blocks_mut()
                .into_iter()
                .zip(&grads.blocks)
                .zip(trainable)
                .map(|((values, grads), trainable)| ParamRef { values, grads, trainable })
                .collect();
            adam.step(&mut params, epoch)?;
            epoch_seconds += start.elapsed().as_secs_f64();

            seen += idx.len();
            loss_sum += out.loss as f64 * idx.len() as f64;
            correct += out.probs.iter().zip(&labels).filter(|(p, y)| (**p >= 0.5) == (**y > 0.5)).count();
            while next_point <= cfg.trace_points && seen * cfg.trace_points >= next_point * n {
                report.trace.push(TracePoint {
                    epoch_fraction: epoch as f64 + next_point as f64 / cfg.trace_points as f64,
                    train_acc: 100.0 * correct as f64 / seen as f64,
                    val_acc: evaluate(model, val_set)?,
                    seconds_elapsed: elapsed + epoch_seconds,
                });
                next_point += 1;
            }
        }
        elapsed += epoch_seconds;
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / n as f64,
            train_acc: evaluate(model, train_set)?,
            val_acc: report.trace.last().map_or(0.0, |p| p.val_acc),
            seconds: epoch_seconds,
        };
        log::info!(
            "run={run_id} epoch={} loss={:.4} train_acc={:.2} val_acc={:.2} seconds={:.2}",
            stats.epoch,
            stats.train_loss,
            stats.train_acc,
            stats.val_acc,
            stats.seconds
        );
        report.epochs.push(stats);
    }
    Ok(report)
}
