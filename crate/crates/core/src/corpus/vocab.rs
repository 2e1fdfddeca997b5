use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CorpusError;

/// Identity of a vocabulary's id assignment (hash of its ordered word list).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VocabHash(pub String);

impl fmt::Display for VocabHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered word list with dense ids `1..=V`; id 0 is reserved for padding and unknown words.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Words in id order (the first entry gets id 1).
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(entries.len());
        let mut words = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        for (i, (word, count)) in entries.into_iter().enumerate() {
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(CorpusError::Invalid(format!("unusable vocabulary word {word:?}")));
            }
            if index.insert(word.clone(), (i + 1) as u32).is_some() {
                return Err(CorpusError::Invalid(format!("duplicate vocabulary word {word:?}")));
            }
            words.push(word);
            counts.push(count);
        }
        Ok(Self { words, counts, index })
    }

    /// V, the number of words (ids run 1..=V).
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id_of(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        if id == 0 {
            return None;
        }
        self.words.get(id as usize - 1).map(String::as_str)
    }

    pub fn count(&self, id: u32) -> Option<u64> {
        if id == 0 {
            return None;
        }
        self.counts.get(id as usize - 1).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn hash(&self) -> VocabHash {
        let mut hasher = Sha256::new();
        for w in &self.words {
            hasher.update(w.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        VocabHash(digest[..16].iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Map from this vocabulary's ids to `target`'s ids (0 where the word is absent).
    pub fn remap_to(&self, target: &Vocabulary) -> Vec<u32> {
        std::iter::once(0).chain(self.words.iter().map(|w| target.id_of(w).unwrap_or(0))).collect()
    }

    /// Keep the first `keep_fraction` (rounded up) of `ranked_words`, re-numbered in rank order.
    pub fn prune<S: AsRef<str>>(&self, ranked_words: &[S], keep_fraction: f64) -> Result<Vocabulary, CorpusError> {
        if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
            return Err(CorpusError::Invalid(format!("keep fraction {keep_fraction} outside (0, 1]")));
        }
        self.check_permutation(ranked_words)?;
        let keep = fraction_count(keep_fraction, self.len());
        self.subset(ranked_words[..keep].iter().map(AsRef::as_ref))
    }

    /// Drop the first `drop_fraction` (rounded up) of `ranked_words`, keeping the rest in rank order.
    pub fn complement<S: AsRef<str>>(&self, ranked_words: &[S], drop_fraction: f64) -> Result<Vocabulary, CorpusError> {
        if !(0.0..=1.0).contains(&drop_fraction) {
            return Err(CorpusError::Invalid(format!("drop fraction {drop_fraction} outside [0, 1]")));
        }
        self.check_permutation(ranked_words)?;
        let drop = fraction_count(drop_fraction, self.len());
        self.subset(ranked_words[drop..].iter().map(AsRef::as_ref))
    }

    /// A new vocabulary made of `words` (in the given order) with this vocabulary's counts.
    pub fn subset<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> Result<Vocabulary, CorpusError> {
        let mut entries = Vec::new();
        for w in words {
            let id = self.id_of(w).ok_or_else(|| CorpusError::Invalid(format!("word {w:?} is not in the vocabulary")))?;
            entries.push((w.to_string(), self.counts[id as usize - 1]));
        }
        if entries.is_empty() {
            return Err(CorpusError::EmptyVocabulary);
        }
        Vocabulary::from_entries(entries)
    }

    fn check_permutation<S: AsRef<str>>(&self, ranked: &[S]) -> Result<(), CorpusError> {
        if ranked.len() != self.len() {
            return Err(CorpusError::NotPermutation(format!("{} ranked words for {} vocabulary words", ranked.len(), self.len())));
        }
        let mut seen = HashSet::with_capacity(ranked.len());
        for w in ranked {
            let w = w.as_ref();
            if self.id_of(w).is_none() {
                return Err(CorpusError::NotPermutation(format!("{w:?} is not in the vocabulary")));
            }
            if !seen.insert(w) {
                return Err(CorpusError::NotPermutation(format!("{w:?} appears twice")));
            }
        }
        Ok(())
    }

    /// `#V=<int>` header, then `word<TAB>id<TAB>count` rows in id order.
    pub fn write_tsv(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "#V={}", self.len())?;
        for (i, (w, c)) in self.words.iter().zip(&self.counts).enumerate() {
            writeln!(out, "{w}\t{}\t{c}", i + 1)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Vocabulary, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Ingest { path: path.to_path_buf(), source })?;
        let parse_err = |line: usize, detail: String| CorpusError::Parse { path: path.to_path_buf(), line, detail };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing #V= header".into()))?;
        let declared: usize = header
            .strip_prefix("#V=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| parse_err(1, format!("bad header {header:?}")))?;
        let mut entries = Vec::with_capacity(declared);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let fields: Vec<&str> = line.split('\t').collect();
            let [word, id, count] = fields[..] else {
                return Err(parse_err(lineno, format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            let id: usize = id.parse().map_err(|_| parse_err(lineno, format!("bad id {id:?}")))?;
            if id != entries.len() + 1 {
                return Err(parse_err(lineno, format!("ids must be dense and sorted; found {id}")));
            }
            let count: u64 = count.parse().map_err(|_| parse_err(lineno, format!("bad count {count:?}")))?;
            entries.push((word.to_string(), count));
        }
        if entries.len() != declared {
            return Err(parse_err(1, format!("header declares {declared} words, file has {}", entries.len())));
        }
        Vocabulary::from_entries(entries)
    }
}

/// `ceil(fraction · total)`, treating products within rounding noise of an integer as that integer.
pub fn fraction_count(fraction: f64, total: usize) -> usize {
    let exact = fraction * total as f64;
    let nearest = exact.round();
    let n = if (exact - nearest).abs() < 1e-9 * (total.max(1) as f64) { nearest } else { exact.ceil() };
    (n as usize).min(total)
}

/// Count words over `token_lists`, keep those seen at least `min_count` times,
/// and number them by descending frequency, ties broken alphabetically.
pub fn build_vocabulary<S: AsRef<str>>(token_lists: &[Vec<S>], min_count: u64) -> Result<Vocabulary, CorpusError> {
    if min_count == 0 {
        return Err(CorpusError::Invalid("min_count must be at least 1".into()));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for tokens in token_lists {
        for t in tokens {
            *freq.entry(t.as_ref()).or_default() += 1;
        }
    }
    if freq.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut entries: Vec<(String, u64)> =
        freq.into_iter().filter(|(_, c)| *c >= min_count).map(|(w, c)| (w.to_string(), c)).collect();
    if entries.is_empty() {
        return Err(CorpusError::EmptyVocabulary);
    }
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(lists: &[&[&str]]) -> Vec<Vec<String>> {
        lists.iter().map(|l| l.iter().map(|s| s.to_string()).collect()).collect()
    }

    fn numbered(v: usize) -> Vocabulary {
        Vocabulary::from_entries((0..v).map(|i| (format!("w{i}"), (v - i) as u64)).collect()).unwrap()
    }

    #[test]
    fn frequency_order() {
        let v = build_vocabulary(&toks(&[&["a", "b", "a"]]), 1).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.id_of("a"), Some(1));
        assert_eq!(v.id_of("b"), Some(2));
        assert_eq!(v.word(0), None);
    }

    #[test]
    fn min_count_threshold_and_ties() {
        let v = build_vocabulary(&toks(&[&["a", "b"], &["b"]]), 2).unwrap();
        assert_eq!(v.words(), &["b".to_string()]);
        let v = build_vocabulary(&toks(&[&["zeta", "alpha", "mid"]]), 1).unwrap();
        assert_eq!(v.words(), &["alpha", "mid", "zeta"]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(build_vocabulary::<String>(&[], 1), Err(CorpusError::EmptyCorpus)));
        assert!(matches!(build_vocabulary::<String>(&[vec![]], 1), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn prune_counts_match_reference_table() {
        let vocab = numbered(23_363);
        let ranked: Vec<String> = vocab.words().iter().rev().cloned().collect();
        let expect = [(1.0, 23_363), (0.8, 18_691), (0.5, 11_682), (0.1, 2_337), (0.05, 1_169), (0.01, 234), (0.005, 117)];
        for (f, n) in expect {
            let pruned = vocab.prune(&ranked, f).unwrap();
            assert_eq!(pruned.len(), n, "fraction {f}");
        }
        let rest = vocab.complement(&ranked, 0.05).unwrap();
        assert_eq!(rest.len(), 22_194);
    }

    #[test]
    fn prune_reassigns_ids_in_rank_order() {
        let vocab = numbered(10);
        let ranked: Vec<String> = vocab.words().iter().rev().cloned().collect();
        let pruned = vocab.prune(&ranked, 0.2).unwrap();
        assert_eq!(pruned.words(), &["w9", "w8"]);
        assert_eq!(pruned.count(1), Some(1));
        assert_eq!(vocab.prune(&ranked, 1.0).unwrap().len(), 10);
        assert_eq!(vocab.complement(&ranked, 0.0).unwrap().len(), 10);
        assert!(matches!(vocab.complement(&ranked, 1.0), Err(CorpusError::EmptyVocabulary)));
    }

    #[test]
    fn ranking_must_be_a_permutation() {
        let vocab = numbered(3);
        assert!(matches!(vocab.prune(&["w0", "w1"], 0.5), Err(CorpusError::NotPermutation(_))));
        assert!(matches!(vocab.prune(&["w0", "w1", "w1"], 0.5), Err(CorpusError::NotPermutation(_))));
        assert!(matches!(vocab.prune(&["w0", "w1", "zz"], 0.5), Err(CorpusError::NotPermutation(_))));
    }

    #[test]
    fn tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        let vocab = build_vocabulary(&toks(&[&["good", "bad", "good", "plot"]]), 1).unwrap();
        vocab.write_tsv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("#V=3\ngood\t1\t2\n"));
        let back = Vocabulary::read_tsv(&path).unwrap();
        assert_eq!(back, vocab);
        assert_eq!(back.hash(), vocab.hash());
    }

    #[test]
    fn hash_depends_on_order() {
        let a = Vocabulary::from_entries(vec![("x".into(), 1), ("y".into(), 1)]).unwrap();
        let b = Vocabulary::from_entries(vec![("y".into(), 1), ("x".into(), 1)]).unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}
