//! The sentiment CNN: embedding → conv → pool → conv → pool → dense → sigmoid.

mod checkpoint;
mod network;

use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EMBEDDING_DIM;
use crate::nnkernel::{conv_output_len, pool_output_len, KernelError};

pub use checkpoint::{load_checkpoint, save_checkpoint, Manifest, CHECKPOINT_FORMAT};
pub use network::{build_model, build_model_with_shape, ForwardTrace, ModelGrads, SentimentCNN, StepOutput};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("word id {id} outside vocabulary of {vocab_size} words")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },
    #[error("{path}: truncated at byte offset {offset} while reading {layer} (expected {expected} bytes in total)")]
    Truncated { path: PathBuf, offset: u64, layer: String, expected: u64 },
    #[error("checkpoint vocabulary hash {found} does not match supplied vocabulary {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Layer sizes. [`ModelShape::table1`] is the reference network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub seq_len: usize,
    pub emb_dim: usize,
    pub conv1_filters: usize,
    pub conv1_width: usize,
    pub conv2_filters: usize,
    pub conv2_width: usize,
    pub pool_size: usize,
    pub pool_stride: usize,
    pub hidden: usize,
}

impl ModelShape {
    pub fn table1() -> Self {
        Self {
            seq_len: 250,
            emb_dim: EMBEDDING_DIM,
            conv1_filters: 32,
            conv1_width: 5,
            conv2_filters: 16,
            conv2_width: 5,
            pool_size: 2,
            pool_stride: 2,
            hidden: 128,
        }
    }

    /// Small network for finite-difference checks (L = 12 needs width-3 kernels).
    pub fn tiny() -> Self {
        Self {
            seq_len: 12,
            emb_dim: 6,
            conv1_filters: 4,
            conv1_width: 3,
            conv2_filters: 3,
            conv2_width: 3,
            pool_size: 2,
            pool_stride: 2,
            hidden: 5,
        }
    }

    /// `[conv1, pool1, conv2, pool2]` output lengths.
    pub fn lengths(&self) -> Result<[usize; 4], ModelError> {
        let err = |what: &str| ModelError::Shape(format!("sequence length {} too short for {what}", self.seq_len));
        let c1 = conv_output_len(self.seq_len, self.conv1_width, 1).ok_or_else(|| err("conv1"))?;
        let p1 = pool_output_len(c1, self.pool_size, self.pool_stride).ok_or_else(|| err("pool1"))?;
        let c2 = conv_output_len(p1, self.conv2_width, 1).ok_or_else(|| err("conv2"))?;
        let p2 = pool_output_len(c2, self.pool_size, self.pool_stride).ok_or_else(|| err("pool2"))?;
        Ok([c1, p1, c2, p2])
    }

    pub fn flatten_len(&self) -> Result<usize, ModelError> {
        Ok(self.lengths()?[3] * self.conv2_filters)
    }

    /// Parameter counts for a vocabulary of `vocab_size` words.
    pub fn layer_counts(&self, vocab_size: usize) -> Result<[(&'static str, u64); 5], ModelError> {
        let flat = self.flatten_len()? as u64;
        let (d, f1, s1, f2, s2, h) = (
            self.emb_dim as u64,
            self.conv1_filters as u64,
            self.conv1_width as u64,
            self.conv2_filters as u64,
            self.conv2_width as u64,
            self.hidden as u64,
        );
        Ok([
            ("embedding", (vocab_size as u64 + 1) * d),
            ("conv1", f1 * s1 * d + f1),
            ("conv2", f2 * s2 * f1 + f2),
            ("dense", flat * h + h),
            ("out", h + 1),
        ])
    }
}

/// Which layers the optimizer may update. A flag covers weights and bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trainable {
    pub embedding: bool,
    pub conv1: bool,
    pub conv2: bool,
    pub dense: bool,
    pub out: bool,
}

impl Trainable {
    pub fn all() -> Self {
        Self { embedding: true, conv1: true, conv2: true, dense: true, out: true }
    }

    pub fn flags(&self) -> [bool; 5] {
        [self.embedding, self.conv1, self.conv2, self.dense, self.out]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: u64,
    pub trainable: u64,
    pub frozen: u64,
}

/// Per-layer and overall parameter counts of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBreakdown {
    pub layers: Vec<(String, u64, bool)>,
    pub count: ParamCount,
}

pub fn count_params<T: crate::nnkernel::Scalar>(model: &SentimentCNN<T>) -> ParamBreakdown {
    let counts = model.shape().layer_counts(model.vocab_size()).expect("built models have valid shapes");
    let flags = model.trainable().flags();
    let mut count = ParamCount { total: 0, trainable: 0, frozen: 0 };
    let layers = counts
        .iter()
        .zip(flags)
        .map(|(&(name, n), t)| {
            count.total += n;
            if t {
                count.trainable += n;
            } else {
                count.frozen += n;
            }
            (name.to_string(), n, t)
        })
        .collect();
    ParamBreakdown { layers, count }
}
