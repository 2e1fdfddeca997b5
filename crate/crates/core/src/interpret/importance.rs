use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::InterpretError;
use crate::corpus::{fraction_count, Vocabulary};
use crate::embedding::EmbeddingMatrix;
use crate::nnkernel::{Conv1DParams, Scalar};

/// Activation-sum importance of every vocabulary word under the first convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceTable {
    /// `scores[id - 1]` for word ids `1..=V`.
    pub scores: Vec<f64>,
    /// Word ids by descending score, ties by ascending id.
    pub ranking: Vec<u32>,
    pub filters: usize,
    pub width: usize,
    pub dim: usize,
}

impl ImportanceTable {
    fn from_scores(scores: Vec<f64>, filters: usize, width: usize, dim: usize) -> Self {
        let mut ranking: Vec<u32> = (1..=scores.len() as u32).collect();
        ranking.sort_by(|&a, &b| scores[b as usize - 1].total_cmp(&scores[a as usize - 1]).then(a.cmp(&b)));
        Self { scores, ranking, filters, width, dim }
    }

    pub fn score(&self, id: u32) -> f64 {
        self.scores[id as usize - 1]
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn check<T: Scalar>(emb: &EmbeddingMatrix, filt: &Conv1DParams<T>) -> Result<(), InterpretError> {
    if filt.channels() != emb.dim() {
        return Err(InterpretError::Shape(format!(
            "filters span {} channels, word vectors have {}",
            filt.channels(),
            emb.dim()
        )));
    }
    Ok(())
}

/// `score(w) = Σ_f Σ_s Σ_i |w_i · F[f,s,i]|`, summed term by term.
pub fn word_importance_bruteforce<T: Scalar>(
    emb: &EmbeddingMatrix,
    filt: &Conv1DParams<T>,
) -> Result<ImportanceTable, InterpretError> {
    check(emb, filt)?;
    let (nf, ns, ni) = (filt.filters(), filt.width(), filt.channels());
    let weights = filt.weights.data();
    let scores = (1..emb.rows())
        .map(|id| {
            let w = emb.row(id);
            let mut total = 0.0f64;
            for f in 0..nf {
                for s in 0..ns {
                    for i in 0..ni {
                        total += (w[i] as f64 * weights[(f * ns + s) * ni + i].as_f64()).abs();
                    }
                }
            }
            total
        })
        .collect();
    Ok(ImportanceTable::from_scores(scores, nf, ns, ni))
}

/// Same scores via `Σ_i |w_i| · A_i` with `A_i = Σ_{f,s} |F[f,s,i]|`.
pub fn word_importance_fast<T: Scalar>(
    emb: &EmbeddingMatrix,
    filt: &Conv1DParams<T>,
) -> Result<ImportanceTable, InterpretError> {
    check(emb, filt)?;
    let ni = filt.channels();
    let mut a = vec![0.0f64; ni];
    for slice in filt.weights.data().chunks(ni) {
        for (ai, v) in a.iter_mut().zip(slice) {
            *ai += v.as_f64().abs();
        }
    }
    let scores = (1..emb.rows()).map(|id| emb.row(id).iter().zip(&a).map(|(w, ai)| (*w as f64).abs() * ai).sum()).collect();
    Ok(ImportanceTable::from_scores(scores, filt.filters(), filt.width(), ni))
}

/// The first `ceil(keep_fraction · V)` words of the ranking.
pub fn rank_words(table: &ImportanceTable, vocab: &Vocabulary, keep_fraction: f64) -> Result<Vec<String>, InterpretError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(InterpretError::Fraction(keep_fraction));
    }
    if table.len() != vocab.len() {
        return Err(InterpretError::Shape(format!("{} scores for {} words", table.len(), vocab.len())));
    }
    let n = fraction_count(keep_fraction, vocab.len());
    Ok(table.ranking[..n].iter().map(|&id| vocab.word(id).expect("ranked id in vocabulary").to_string()).collect())
}

/// `rank<TAB>word<TAB>score`, one line per word, no header.
pub fn write_importance_tsv(table: &ImportanceTable, vocab: &Vocabulary, path: &Path) -> Result<(), InterpretError> {
    let mut out = BufWriter::new(File::create(path)?);
    for (rank, &id) in table.ranking.iter().enumerate() {
        let word = vocab.word(id).ok_or_else(|| InterpretError::Shape(format!("id {id} not in vocabulary")))?;
        writeln!(out, "{}\t{word}\t{:.8e}", rank + 1, table.score(id))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkernel::Tensor;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::from_entries((0..n).map(|i| (format!("w{i}"), 1)).collect()).unwrap()
    }

    fn instance(seed: u64, v: usize, f: usize, s: usize, i: usize) -> (EmbeddingMatrix, Conv1DParams<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let voc = vocab(v);
        let mut data = vec![0.0f32; (v + 1) * i];
        data[i..].iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        let emb = EmbeddingMatrix::new(v, i, data, voc.hash()).unwrap();
        let w = (0..f * s * i).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let filt = Conv1DParams::new(Tensor::new(vec![f, s, i], w).unwrap(), Tensor::zeros(vec![f]), 1).unwrap();
        (emb, filt)
    }

    /// Same sum with the loops nested in the opposite order.
    fn reversed_loops(emb: &EmbeddingMatrix, filt: &Conv1DParams<f64>) -> Vec<f64> {
        let (nf, ns, ni) = (filt.filters(), filt.width(), filt.channels());
        (1..emb.rows())
            .map(|id| {
                let w = emb.row(id);
                let mut total = 0.0;
                for i in (0..ni).rev() {
                    for s in (0..ns).rev() {
                        for f in (0..nf).rev() {
                            total += (w[i] as f64 * filt.weights.data()[(f * ns + s) * ni + i]).abs();
                        }
                    }
                }
                total
            })
            .collect()
    }

    #[test]
    fn single_term_and_zero_vector() {
        let voc = vocab(2);
        let emb = EmbeddingMatrix::new(2, 1, vec![0.0, 2.0, 0.0], voc.hash()).unwrap();
        let filt = Conv1DParams::new(Tensor::new(vec![1, 1, 1], vec![-3.0]).unwrap(), Tensor::zeros(vec![1]), 1).unwrap();
        let t = word_importance_bruteforce(&emb, &filt).unwrap();
        assert_eq!(t.scores, vec![6.0, 0.0]);
        assert_eq!(word_importance_fast(&emb, &filt).unwrap().scores, vec![6.0, 0.0]);
    }

    #[test]
    fn brute_force_matches_reversed_loops() {
        let (emb, filt) = instance(3, 10, 2, 2, 3);
        let t = word_importance_bruteforce(&emb, &filt).unwrap();
        for (a, b) in t.scores.iter().zip(reversed_loops(&emb, &filt)) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn ranking_ties_and_counts() {
        let voc = vocab(4);
        let emb = EmbeddingMatrix::new(4, 1, vec![0.0, 1.0, 3.0, 1.0, 3.0], voc.hash()).unwrap();
        let filt = Conv1DParams::new(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap(), Tensor::zeros(vec![1]), 1).unwrap();
        let t = word_importance_fast(&emb, &filt).unwrap();
        assert_eq!(t.ranking, vec![2, 4, 1, 3]);
        assert_eq!(rank_words(&t, &voc, 0.5).unwrap(), vec!["w1", "w3"]);
        assert_eq!(rank_words(&t, &voc, 1.0).unwrap().len(), 4);
        assert!(rank_words(&t, &voc, 0.0).is_err());
    }

    #[test]
    fn reference_vocabulary_counts() {
        let voc = vocab(23_363);
        let table = ImportanceTable::from_scores(vec![1.0; 23_363], 32, 5, 100);
        assert_eq!(rank_words(&table, &voc, 0.05).unwrap().len(), 1_169);
    }

    #[test]
    fn tsv_has_one_line_per_word() {
        let (emb, filt) = instance(1, 7, 2, 2, 3);
        let t = word_importance_fast(&emb, &filt).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imp.tsv");
        write_importance_tsv(&t, &vocab(7), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("1\tw"));
    }

    proptest! {
        #[test]
        fn fast_equals_brute_force(seed in 0u64..10_000, f in 1usize..5, s in 1usize..6, i in 1usize..8) {
            let (emb, filt) = instance(seed, 6, f, s, i);
            let a = word_importance_bruteforce(&emb, &filt).unwrap();
            let b = word_importance_fast(&emb, &filt).unwrap();
            for (x, y) in a.scores.iter().zip(&b.scores) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(f64::MIN_POSITIVE));
                prop_assert!(*x >= 0.0);
            }
        }

        #[test]
        fn scores_are_homogeneous_and_sign_blind(seed in 0u64..10_000, alpha in 0.0f64..4.0) {
            let (emb, filt) = instance(seed, 5, 3, 2, 4);
            let base = word_importance_fast(&emb, &filt).unwrap();
            let scaled_data: Vec<f32> = emb.data().iter().map(|v| (*v as f64 * alpha) as f32).collect();
            let scaled = EmbeddingMatrix::new(5, 4, scaled_data, emb.vocab_hash().clone()).unwrap();
            let s = word_importance_fast(&scaled, &filt).unwrap();
            for (b, x) in base.scores.iter().zip(&s.scores) {
                prop_assert!((alpha * b - x).abs() <= 1e-6 * (alpha * b).max(1e-12));
            }
            let mut neg = filt.clone();
            neg.weights.data_mut().iter_mut().for_each(|v| *v = -*v);
            prop_assert_eq!(&word_importance_fast(&emb, &neg).unwrap().scores, &base.scores);
        }
    }
}
