use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_vocabulary, encode_ids, load_review_dir, read_id_docs, split_indices, tokenize_text, write_encoded,
    write_id_docs, CorpusError, EncodedDataset, FilterRules, IdDoc, RawReview, Sentiment, SplitTag, Vocabulary,
    SEQ_LEN,
};

/// How a review tree becomes a prepared corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub data_root: PathBuf,
    pub split_ratio: f64,
    pub seed: u64,
    pub min_count: u64,
    pub seq_len: usize,
    /// Balanced seeded subsample of the training tree (desk-scale runs).
    pub max_reviews: Option<usize>,
    /// Same, for the test tree.
    pub max_test_reviews: Option<usize>,
}

impl CorpusConfig {
    pub fn new(data_root: impl Into<PathBuf>) -> Self {
        Self {
            data_root: data_root.into(),
            split_ratio: 0.9,
            seed: 0,
            min_count: 1,
            seq_len: SEQ_LEN,
            max_reviews: None,
            max_test_reviews: None,
        }
    }
}

/// Vocabulary plus every split as complete id sequences, ready to be encoded
/// under this vocabulary or any pruned subset of it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCorpus {
    pub vocab: Vocabulary,
    pub train: Vec<IdDoc>,
    pub val: Vec<IdDoc>,
    /// Empty when the data root has no `test/` tree.
    pub test: Vec<IdDoc>,
    pub seq_len: usize,
}

/// `root/train/{pos,neg}` (+ optional `root/test`) or a bare `root/{pos,neg}`.
fn locate_trees(root: &Path) -> (PathBuf, Option<PathBuf>) {
    let train = root.join("train");
    if train.join("pos").is_dir() {
        let test = root.join("test");
        (train, test.join("pos").is_dir().then_some(test))
    } else {
        (root.to_path_buf(), None)
    }
}

fn subsample(reviews: Vec<RawReview>, limit: Option<usize>, seed: u64) -> Vec<RawReview> {
    let Some(limit) = limit else { return reviews };
    if limit >= reviews.len() {
        return reviews;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg): (Vec<RawReview>, Vec<RawReview>) = reviews.into_iter().partition(|r| r.label.is_positive());
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let n_pos = (limit / 2 + limit % 2).min(pos.len());
    let n_neg = (limit - n_pos).min(neg.len());
    let mut out: Vec<RawReview> = pos.into_iter().take(n_pos).chain(neg.into_iter().take(n_neg)).collect();
    out.shuffle(&mut rng);
    out
}

fn tokenize_all(reviews: &[RawReview], rules: &FilterRules) -> Vec<Vec<String>> {
    reviews.par_iter().map(|r| tokenize_text(&r.text, rules)).collect()
}

fn to_ids(tokens: &[String], label: Sentiment, vocab: &Vocabulary) -> IdDoc {
    IdDoc { ids: tokens.iter().filter_map(|t| vocab.id_of(t)).collect(), label }
}

/// Ingest, tokenize, split 90:10 (by default) and build the vocabulary from the training split.
pub fn prepare_corpus(cfg: &CorpusConfig, rules: &FilterRules) -> Result<PreparedCorpus, CorpusError> {
    let (train_root, test_root) = locate_trees(&cfg.data_root);
    let reviews = subsample(load_review_dir(&train_root)?.reviews, cfg.max_reviews, cfg.seed);
    if reviews.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let tokens = tokenize_all(&reviews, rules);
    let labels: Vec<Sentiment> = reviews.iter().map(|r| r.label).collect();
    let (train_idx, val_idx) = split_indices(&labels, cfg.split_ratio, cfg.seed)?;
    let train_tokens: Vec<Vec<String>> = train_idx.iter().map(|&i| tokens[i].clone()).collect();
    let vocab = build_vocabulary(&train_tokens, cfg.min_count)?;
    let train = train_idx.iter().map(|&i| to_ids(&tokens[i], labels[i], &vocab)).collect();
    let val = val_idx.iter().map(|&i| to_ids(&tokens[i], labels[i], &vocab)).collect();
    let test = match test_root {
        Some(dir) => {
            let test_reviews = subsample(load_review_dir(&dir)?.reviews, cfg.max_test_reviews, cfg.seed.wrapping_add(1));
            let test_tokens = tokenize_all(&test_reviews, rules);
            test_reviews.iter().zip(&test_tokens).map(|(r, t)| to_ids(t, r.label, &vocab)).collect()
        }
        None => Vec::new(),
    };
    log::info!("prepared corpus: V={} train={} val={} test={}", vocab.len(), train_idx.len(), val_idx.len(), test.len());
    Ok(PreparedCorpus { vocab, train, val, test, seq_len: cfg.seq_len })
}

const SPLITS: [SplitTag; 3] = [SplitTag::Train, SplitTag::Val, SplitTag::Test];

impl PreparedCorpus {
    pub fn docs(&self, split: SplitTag) -> &[IdDoc] {
        match split {
            SplitTag::Train => &self.train,
            SplitTag::Val => &self.val,
            SplitTag::Test => &self.test,
        }
    }

    /// Encode a split under `target` (this corpus's vocabulary or a subset of it).
    pub fn encode_split(&self, split: SplitTag, target: &Vocabulary) -> EncodedDataset {
        let remap = (target != &self.vocab).then(|| self.vocab.remap_to(target));
        EncodedDataset {
            reviews: self.docs(split).iter().map(|d| encode_ids(d, remap.as_deref(), self.seq_len)).collect(),
            vocab_hash: target.hash(),
            split,
        }
    }

    /// Held-out split used for reported accuracies: the test tree when present, else validation.
    pub fn eval_split(&self) -> SplitTag {
        if self.test.is_empty() {
            SplitTag::Val
        } else {
            SplitTag::Test
        }
    }

    /// Writes `vocab.tsv`, `<split>.tsv` (fixed length) and `<split>.ids` (complete sequences).
    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir)?;
        self.vocab.write_tsv(&dir.join("vocab.tsv"))?;
        for split in SPLITS {
            if split == SplitTag::Test && self.test.is_empty() {
                continue;
            }
            write_encoded(&self.encode_split(split, &self.vocab), &dir.join(format!("{split}.tsv")))?;
            write_id_docs(self.docs(split), &dir.join(format!("{split}.ids")))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, seq_len: usize) -> Result<Self, CorpusError> {
        let vocab = Vocabulary::read_tsv(&dir.join("vocab.tsv"))?;
        let read = |split: SplitTag| -> Result<Vec<IdDoc>, CorpusError> {
            let path = dir.join(format!("{split}.ids"));
            if split == SplitTag::Test && !path.exists() {
                return Ok(Vec::new());
            }
            read_id_docs(&path, &vocab)
        };
        let (train, val, test) = (read(SplitTag::Train)?, read(SplitTag::Val)?, read(SplitTag::Test)?);
        Ok(Self { vocab, train, val, test, seq_len })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tree(root: &Path, split: &str, n: usize) {
        for (sub, word) in [("pos", "wonderful"), ("neg", "terrible")] {
            let dir = root.join(split).join(sub);
            fs::create_dir_all(&dir).unwrap();
            for i in 0..n {
                fs::write(dir.join(format!("{i}_1.txt")), format!("A {word} film<br />with plot {i} and acting.")).unwrap();
            }
        }
    }

    #[test]
    fn prepares_saves_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path(), "train", 10);
        write_tree(dir.path(), "test", 3);
        let rules = FilterRules::pinned();
        let mut cfg = CorpusConfig::new(dir.path());
        cfg.seq_len = 8;
        let corpus = prepare_corpus(&cfg, &rules).unwrap();
        assert_eq!((corpus.train.len(), corpus.val.len(), corpus.test.len()), (18, 2, 6));
        assert_eq!(corpus.eval_split(), SplitTag::Test);
        assert!(corpus.vocab.id_of("film").is_some());
        assert!(corpus.vocab.id_of("a").is_none());

        let out = dir.path().join("prep");
        corpus.save(&out).unwrap();
        assert_eq!(PreparedCorpus::load(&out, 8).unwrap(), corpus);
        let encoded = corpus.encode_split(SplitTag::Train, &corpus.vocab);
        assert!(encoded.reviews.iter().all(|r| r.ids.len() == 8));
    }

    #[test]
    fn encoding_under_a_subset_drops_words() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path(), "train", 4);
        let corpus = prepare_corpus(&CorpusConfig::new(dir.path().join("train")), &FilterRules::pinned()).unwrap();
        let small = corpus.vocab.subset(["film"]).unwrap();
        let ds = corpus.encode_split(SplitTag::Train, &small);
        assert_eq!(ds.vocab_hash, small.hash());
        assert!(ds.reviews.iter().all(|r| r.ids[0] == 1 && r.content_len() == 1));
    }

    #[test]
    fn subsample_is_balanced() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path(), "train", 20);
        let mut cfg = CorpusConfig::new(dir.path());
        cfg.max_reviews = Some(10);
        let corpus = prepare_corpus(&cfg, &FilterRules::pinned()).unwrap();
        let pos = corpus.train.iter().chain(&corpus.val).filter(|d| d.label.is_positive()).count();
        assert_eq!(corpus.train.len() + corpus.val.len(), 10);
        assert_eq!(pos, 5);
    }
}
