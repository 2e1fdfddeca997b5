//! Review ingestion, tokenization, vocabularies and fixed-length encoding.

mod dataset;
mod ingest;
mod pipeline;
mod tokenize;
mod vocab;

use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{
    encode, encode_ids, read_encoded, read_id_docs, split_indices, split_train_val, write_encoded, write_id_docs,
    EncodedDataset, EncodedReview, IdDoc, SplitTag,
};
pub use ingest::{load_review_dir, IngestReport};
pub use pipeline::{prepare_corpus, CorpusConfig, PreparedCorpus};
pub use tokenize::{tokenize_and_filter, tokenize_text, FilterRules};
pub(crate) use tokenize::pinned_lists;
pub use vocab::{build_vocabulary, fraction_count, VocabHash, Vocabulary};

/// Fixed sequence length every review is truncated or padded to.
pub const SEQ_LEN: usize = 250;
/// Shared padding / unknown-word id.
pub const PAD_ID: u32 = 0;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Ingest { path: PathBuf, source: io::Error },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("ranked words are not a permutation of the vocabulary: {0}")]
    NotPermutation(String),
    #[error("{path}:{line}: {detail}")]
    Parse { path: PathBuf, line: usize, detail: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Binary review label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sentiment {
    Negative = 0,
    Positive = 1,
}

impl Sentiment {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Negative),
            1 => Some(Self::Positive),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Self::Positive
    }
}

/// One review as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReview {
    pub text: String,
    pub label: Sentiment,
    /// File stem of the source file.
    pub source_id: String,
}
