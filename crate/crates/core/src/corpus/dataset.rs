use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Sentiment, VocabHash, Vocabulary, PAD_ID};

/// A review as exactly `seq_len` ids with a zero-padded suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedReview {
    pub ids: Vec<u32>,
    pub label: Sentiment,
}

impl EncodedReview {
    /// Number of ids before the padding suffix.
    pub fn content_len(&self) -> usize {
        self.ids.iter().rposition(|&id| id != PAD_ID).map_or(0, |p| p + 1)
    }

    pub fn decode(&self, vocab: &Vocabulary) -> Vec<String> {
        self.ids.iter().filter_map(|&id| vocab.word(id)).map(str::to_string).collect()
    }
}

/// A review as its complete (untruncated) id sequence under some vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdDoc {
    pub ids: Vec<u32>,
    pub label: Sentiment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub reviews: Vec<EncodedReview>,
    pub vocab_hash: VocabHash,
    pub split: SplitTag,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    pub fn positive_fraction(&self) -> f64 {
        positive_fraction(self.reviews.iter().map(|r| r.label))
    }
}

fn positive_fraction(labels: impl Iterator<Item = Sentiment>) -> f64 {
    let (mut pos, mut n) = (0usize, 0usize);
    for l in labels {
        n += 1;
        pos += l.is_positive() as usize;
    }
    if n == 0 {
        0.0
    } else {
        pos as f64 / n as f64
    }
}

/// Map tokens to ids, dropping out-of-vocabulary tokens, then truncate or right-pad to `seq_len`.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, label: Sentiment, seq_len: usize) -> EncodedReview {
    let mut ids: Vec<u32> = tokens.iter().filter_map(|t| vocab.id_of(t.as_ref())).take(seq_len).collect();
    ids.resize(seq_len, PAD_ID);
    EncodedReview { ids, label }
}

/// Like [`encode`] for a document already in ids: `remap[old_id]` gives the new id, 0 drops it.
pub fn encode_ids(doc: &IdDoc, remap: Option<&[u32]>, seq_len: usize) -> EncodedReview {
    let mut ids: Vec<u32> = match remap {
        Some(map) => doc.ids.iter().map(|&id| map[id as usize]).filter(|&id| id != PAD_ID).take(seq_len).collect(),
        None => doc.ids.iter().copied().filter(|&id| id != PAD_ID).take(seq_len).collect(),
    };
    ids.resize(seq_len, PAD_ID);
    EncodedReview { ids, label: doc.label }
}

/// Seeded shuffle into `floor(ratio·N)` train indices and the rest, redrawn stratified
/// by label if the plain shuffle leaves either side more than 2 points off the overall balance.
pub fn split_indices(labels: &[Sentiment], ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), CorpusError> {
    let n = labels.len();
    if n < 2 {
        return Err(CorpusError::Invalid(format!("cannot split {n} reviews")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::Invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n_train = (ratio * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(CorpusError::Invalid(format!("ratio {ratio} leaves an empty split of {n} reviews")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (train, val) = order.split_at(n_train);

    let whole = positive_fraction(labels.iter().copied());
    let balanced = |idx: &[usize]| (positive_fraction(idx.iter().map(|&i| labels[i])) - whole).abs() <= 0.02;
    if balanced(train) && balanced(val) {
        return Ok((train.to_vec(), val.to_vec()));
    }

    let (pos, neg): (Vec<usize>, Vec<usize>) = order.iter().partition(|&&i| labels[i].is_positive());
    let train_pos = ((n_train as f64 * whole).round() as usize).clamp(n_train.saturating_sub(neg.len()), pos.len().min(n_train));
    let train_neg = n_train - train_pos;
    let mut train: Vec<usize> = pos[..train_pos].iter().chain(&neg[..train_neg]).copied().collect();
    let mut val: Vec<usize> = pos[train_pos..].iter().chain(&neg[train_neg..]).copied().collect();
    train.shuffle(&mut rng);
    val.shuffle(&mut rng);
    Ok((train, val))
}

/// Split encoded reviews into train and validation datasets (see [`split_indices`]).
pub fn split_train_val(
    reviews: &[EncodedReview],
    vocab_hash: &VocabHash,
    ratio: f64,
    seed: u64,
) -> Result<(EncodedDataset, EncodedDataset), CorpusError> {
    let labels: Vec<Sentiment> = reviews.iter().map(|r| r.label).collect();
    let (train_idx, val_idx) = split_indices(&labels, ratio, seed)?;
    let pick = |idx: &[usize], split| EncodedDataset {
        reviews: idx.iter().map(|&i| reviews[i].clone()).collect(),
        vocab_hash: vocab_hash.clone(),
        split,
    };
    Ok((pick(&train_idx, SplitTag::Train), pick(&val_idx, SplitTag::Val)))
}

fn write_rows<'a>(path: &Path, rows: impl Iterator<Item = (Sentiment, &'a [u32])>) -> Result<(), CorpusError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for (label, ids) in rows {
        write!(out, "{}\t", label.as_u8())?;
        for (i, id) in ids.iter().enumerate() {
            if i > 0 {
                out.write_all(b",")?;
            }
            write!(out, "{id}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_rows(path: &Path, max_id: u32, fixed_len: Option<usize>) -> Result<Vec<(Sentiment, Vec<u32>)>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Ingest { path: path.to_path_buf(), source })?;
    let err = |line: usize, detail: String| CorpusError::Parse { path: path.to_path_buf(), line, detail };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let (label, ids) = line.split_once('\t').ok_or_else(|| err(lineno, "missing tab after label".into()))?;
        let label = label
            .parse::<u8>()
            .ok()
            .and_then(Sentiment::from_u8)
            .ok_or_else(|| err(lineno, format!("bad label {label:?}")))?;
        let ids: Vec<u32> = if ids.is_empty() {
            Vec::new()
        } else {
            ids.split(',')
                .map(|s| s.parse::<u32>().map_err(|_| err(lineno, format!("bad id {s:?}"))))
                .collect::<Result<_, _>>()?
        };
        if let Some(&bad) = ids.iter().find(|&&id| id > max_id) {
            return Err(err(lineno, format!("id {bad} exceeds vocabulary size {max_id}")));
        }
        if let Some(len) = fixed_len {
            if ids.len() != len {
                return Err(err(lineno, format!("expected {len} ids, found {}", ids.len())));
            }
        }
        rows.push((label, ids));
    }
    Ok(rows)
}

/// One review per line: `label<TAB>id,id,…`.
pub fn write_encoded(dataset: &EncodedDataset, path: &Path) -> Result<(), CorpusError> {
    write_rows(path, dataset.reviews.iter().map(|r| (r.label, r.ids.as_slice())))
}

pub fn read_encoded(path: &Path, vocab: &Vocabulary, split: SplitTag, seq_len: usize) -> Result<EncodedDataset, CorpusError> {
    let rows = read_rows(path, vocab.len() as u32, Some(seq_len))?;
    for (i, (_, ids)) in rows.iter().enumerate() {
        let content = ids.iter().rposition(|&id| id != PAD_ID).map_or(0, |p| p + 1);
        if ids[..content].contains(&PAD_ID) {
            return Err(CorpusError::Parse { path: path.to_path_buf(), line: i + 1, detail: "padding is not a suffix".into() });
        }
    }
    Ok(EncodedDataset {
        reviews: rows.into_iter().map(|(label, ids)| EncodedReview { ids, label }).collect(),
        vocab_hash: vocab.hash(),
        split,
    })
}

/// Same line format as [`write_encoded`] but with variable-length sequences.
pub fn write_id_docs(docs: &[IdDoc], path: &Path) -> Result<(), CorpusError> {
    write_rows(path, docs.iter().map(|d| (d.label, d.ids.as_slice())))
}

pub fn read_id_docs(path: &Path, vocab: &Vocabulary) -> Result<Vec<IdDoc>, CorpusError> {
    Ok(read_rows(path, vocab.len() as u32, None)?.into_iter().map(|(label, ids)| IdDoc { ids, label }).collect())
}
