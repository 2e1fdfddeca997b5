//! Word-embedding matrices: skip-gram training and text vector files.

mod skipgram;
mod vectors;

use std::io;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{VocabHash, Vocabulary};

pub use skipgram::{train_skipgram, train_skipgram_ids, SkipGramConfig, SkipGramReport};
pub use vectors::{load_word_vectors, save_word_vectors, LoadedVectors};

/// Embedding width used throughout.
pub const EMBEDDING_DIM: usize = 100;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("invalid skip-gram settings: {0}")]
    Config(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{path}:{line}: {detail}")]
    Parse { path: PathBuf, line: usize, detail: String },
    #[error("{path}:{line}: expected {expected}-dimensional vectors, found {found}")]
    Dimension { path: PathBuf, line: usize, expected: usize, found: usize },
    #[error("embedding shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// `(V+1) × dim` row-major matrix; row 0 is the shared pad/unknown row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
    vocab_hash: VocabHash,
}

impl EmbeddingMatrix {
    /// Wraps `data`, which must hold `(vocab_size + 1) · dim` finite values.
    pub fn new(vocab_size: usize, dim: usize, data: Vec<f32>, vocab_hash: VocabHash) -> Result<Self, EmbeddingError> {
        if dim == 0 || data.len() != (vocab_size + 1) * dim {
            return Err(EmbeddingError::Shape(format!(
                "{} values cannot form {} rows of width {dim}",
                data.len(),
                vocab_size + 1
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::Shape("non-finite embedding value".into()));
        }
        Ok(Self { dim, data, vocab_hash })
    }

    pub fn zeros(vocab: &Vocabulary, dim: usize) -> Self {
        Self { dim, data: vec![0.0; (vocab.len() + 1) * dim], vocab_hash: vocab.hash() }
    }

    /// Rows `1..=V` drawn from `U(-limit, limit)`, row 0 zero.
    pub fn random_uniform(vocab: &Vocabulary, dim: usize, limit: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(vocab, dim);
        m.data[dim..].iter_mut().for_each(|v| *v = rng.gen_range(-limit..limit) as f32);
        m
    }

    /// V + 1.
    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.rows() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, id: usize) -> &[f32] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [f32] {
        &mut self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn vocab_hash(&self) -> &VocabHash {
        &self.vocab_hash
    }

    /// Subtract the mean word vector from rows `1..=V`; row 0 stays zero. Returns the removed mean.
    pub fn center(&mut self) -> Vec<f32> {
        let (v, d) = (self.vocab_size(), self.dim);
        if v == 0 {
            return vec![0.0; d];
        }
        let mut mean = vec![0.0f64; d];
        for row in self.data[d..].chunks(d) {
            mean.iter_mut().zip(row).for_each(|(m, x)| *m += *x as f64);
        }
        let mean: Vec<f32> = mean.iter().map(|m| (m / v as f64) as f32).collect();
        for row in self.data[d..].chunks_mut(d) {
            row.iter_mut().zip(&mean).for_each(|(x, m)| *x -= m);
        }
        mean
    }

    /// Rows for `target`'s words (a subset of the vocabulary this matrix indexes).
    pub fn restrict(&self, source: &Vocabulary, target: &Vocabulary) -> Result<Self, EmbeddingError> {
        if source.hash() != self.vocab_hash {
            return Err(EmbeddingError::Shape("source vocabulary does not match this matrix".into()));
        }
        let mut out = Self::zeros(target, self.dim);
        for (i, w) in target.words().iter().enumerate() {
            let id = source.id_of(w).ok_or_else(|| EmbeddingError::Shape(format!("{w:?} missing from source vocabulary")))?;
            out.row_mut(i + 1).copy_from_slice(self.row(id as usize));
        }
        Ok(out)
    }
}
