//! Global interpretation of the first convolution: word importance, filter
//! shuffles, k-means over words plus filter slices, and 2-D PCA.

mod cluster;
mod importance;
mod pca;
mod shuffle;

use std::io;

use thiserror::Error;

pub use cluster::{cluster_report, kmeans, write_cluster_csv, ClusterRow, Clustering, KMeansConfig};
pub use importance::{
    rank_words, word_importance_bruteforce, word_importance_fast, write_importance_tsv, ImportanceTable,
};
pub use pca::{pca2, write_projection_tsv, Projection2D};
pub use shuffle::{randomize_first_layer, shuffle_across_filters, shuffle_within_filters, ShuffleMode};

use crate::corpus::Vocabulary;
use crate::embedding::EmbeddingMatrix;
use crate::nnkernel::{Conv1DParams, Scalar};

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cannot form {k} clusters from {n} rows")]
    InvalidK { k: usize, n: usize },
    #[error("input has rank 0: every row is identical")]
    RankZero,
    #[error("keep fraction {0} outside (0, 1]")]
    Fraction(f64),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Row-major `n × dim` matrix of doubles.
#[derive(Debug, Clone, PartialEq)]
pub struct Rows {
    pub data: Vec<f64>,
    pub dim: usize,
}

impl Rows {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self, InterpretError> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(InterpretError::Shape(format!("{} values do not form rows of width {dim}", data.len())));
        }
        Ok(Self { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Word rows `1..=V` followed by the `F·S` first-layer slices (filter-major).
pub fn words_and_slices<T: Scalar>(emb: &EmbeddingMatrix, filt: &Conv1DParams<T>) -> Result<Rows, InterpretError> {
    if filt.channels() != emb.dim() {
        return Err(InterpretError::Shape(format!("filters span {} channels, embeddings {}", filt.channels(), emb.dim())));
    }
    let mut data: Vec<f64> = emb.data()[emb.dim()..].iter().map(|&v| v as f64).collect();
    data.extend(filt.weights.data().iter().map(|v| v.as_f64()));
    Rows::new(data, emb.dim())
}

/// `(label_type, label)` for each row of [`words_and_slices`].
pub fn row_labels<T: Scalar>(vocab: &Vocabulary, filt: &Conv1DParams<T>) -> Vec<(&'static str, String)> {
    let mut labels: Vec<(&'static str, String)> = vocab.words().iter().map(|w| ("word", w.clone())).collect();
    for f in 0..filt.filters() {
        for s in 0..filt.width() {
            labels.push(("filter", format!("f{f}s{s}")));
        }
    }
    labels
}
