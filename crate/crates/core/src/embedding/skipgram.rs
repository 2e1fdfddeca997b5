//! Skip-gram with negative sampling.
//!
//! Single-worker mode is fully deterministic for a given seed. With more than
//! one worker the corpus is sharded and all workers update the shared matrices
//! without locks (relaxed atomics); updates may be lost and results vary run to run.

use std::cell::Cell;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingMatrix, EMBEDDING_DIM};
use crate::corpus::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Starting learning rate, decayed linearly to `min_lr` over all epochs.
    pub lr: f64,
    pub min_lr: f64,
    /// Words rarer than this are skipped (the vocabulary is usually filtered already).
    pub min_count: u64,
    /// Frequent-word subsampling threshold; 0 keeps every token.
    pub sample: f64,
    /// Remove the mean word vector after training.
    pub center: bool,
    pub seed: u64,
    pub workers: usize,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: EMBEDDING_DIM,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            min_lr: 1e-4,
            min_count: 1,
            sample: 1e-3,
            center: true,
            seed: 0,
            workers: 1,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let problems: Vec<&str> = [
            (self.dim == 0, "dim must be at least 1"),
            (self.window == 0, "window must be at least 1"),
            (self.negatives == 0, "negatives must be at least 1"),
            (self.epochs == 0, "epochs must be at least 1"),
            (!(self.lr > 0.0), "lr must be positive"),
            (self.min_lr < 0.0 || self.min_lr > self.lr, "min_lr must lie in [0, lr]"),
            (self.workers == 0, "workers must be at least 1"),
            (!(self.sample >= 0.0), "sample must be non-negative"),
        ]
        .into_iter()
        .filter_map(|(bad, msg)| bad.then_some(msg))
        .collect();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(EmbeddingError::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramReport {
    /// Mean negative-sampling loss per (center, context) pair, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    pub pairs_per_epoch: u64,
}

/// Row storage shared by the deterministic and the lock-free trainers.
trait RowStore {
    fn load(&self, start: usize, out: &mut [f32]);
    fn add(&self, start: usize, delta: &[f32]);
}

impl RowStore for [Cell<f32>] {
    fn load(&self, start: usize, out: &mut [f32]) {
        let n = out.len();
        for (o, c) in out.iter_mut().zip(&self[start..start + n]) {
            *o = c.get();
        }
    }

    fn add(&self, start: usize, delta: &[f32]) {
        for (c, d) in self[start..start + delta.len()].iter().zip(delta) {
            c.set(c.get() + d);
        }
    }
}

impl RowStore for [AtomicU32] {
    fn load(&self, start: usize, out: &mut [f32]) {
        let n = out.len();
        for (o, a) in out.iter_mut().zip(&self[start..start + n]) {
            *o = f32::from_bits(a.load(Ordering::Relaxed));
        }
    }

    fn add(&self, start: usize, delta: &[f32]) {
        for (a, d) in self[start..start + delta.len()].iter().zip(delta) {
            let v = f32::from_bits(a.load(Ordering::Relaxed)) + d;
            a.store(v.to_bits(), Ordering::Relaxed);
        }
    }
}

struct Schedule {
    lr: f64,
    min_lr: f64,
    total_words: f64,
}

impl Schedule {
    fn at(&self, processed: u64) -> f32 {
        let frac = (processed as f64 / self.total_words).min(1.0);
        (self.lr - (self.lr - self.min_lr) * frac).max(self.min_lr) as f32
    }
}

fn log_sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[allow(clippy::too_many_arguments)]
fn train_shard<S: RowStore + ?Sized>(
    input: &S,
    output: &S,
    docs: &[Vec<u32>],
    cfg: &SkipGramConfig,
    keep: &[f64],
    sampler: &WeightedAliasIndex<f64>,
    schedule: &Schedule,
    processed: &AtomicU64,
    rng: &mut ChaCha8Rng,
) -> (f64, u64) {
    let d = cfg.dim;
    let mut center = vec![0.0f32; d];
    let mut target = vec![0.0f32; d];
    let mut grad_center = vec![0.0f32; d];
    let mut delta = vec![0.0f32; d];
    let (mut loss, mut pairs) = (0.0f64, 0u64);
    let mut doc = Vec::new();
    for full in docs {
        let lr = schedule.at(processed.fetch_add(full.len() as u64, Ordering::Relaxed));
        doc.clear();
        doc.extend(full.iter().copied().filter(|&w| keep[w as usize] >= 1.0 || rng.gen::<f64>() < keep[w as usize]));
        if doc.len() < 2 {
            continue;
        }
        for (pos, &word) in doc.iter().enumerate() {
            let lo = pos.saturating_sub(cfg.window);
            let hi = (pos + cfg.window).min(doc.len() - 1);
            for (ctx_pos, &context) in doc.iter().enumerate().take(hi + 1).skip(lo) {
                if ctx_pos == pos {
                    continue;
                }
                input.load(word as usize * d, &mut center);
                grad_center.iter_mut().for_each(|g| *g = 0.0);
                for k in 0..=cfg.negatives {
                    let (tgt, label) = if k == 0 {
                        (context, 1.0f32)
                    } else {
                        let neg = sampler.sample(rng) as u32 + 1;
                        if neg == context {
                            continue;
                        }
                        (neg, 0.0)
                    };
                    output.load(tgt as usize * d, &mut target);
                    let dot: f32 = center.iter().zip(&target).map(|(a, b)| a * b).sum();
                    loss -= if label > 0.0 { log_sigmoid(dot) } else { log_sigmoid(-dot) } as f64;
                    let g = (label - 1.0 / (1.0 + (-dot).exp())) * lr;
                    for ((gc, dl), (&t, &c)) in grad_center.iter_mut().zip(delta.iter_mut()).zip(target.iter().zip(&center)) {
                        *gc += g * t;
                        *dl = g * c;
                    }
                    output.add(tgt as usize * d, &delta);
                }
                input.add(word as usize * d, &grad_center);
                pairs += 1;
            }
        }
    }
    (loss, pairs)
}

/// Train embeddings on documents given as vocabulary ids (id 0 is ignored).
pub fn train_skipgram_ids(
    docs: &[Vec<u32>],
    vocab: &Vocabulary,
    cfg: &SkipGramConfig,
) -> Result<(EmbeddingMatrix, SkipGramReport), EmbeddingError> {
    cfg.validate()?;
    let v = vocab.len();
    let keep = |id: u32| id != 0 && (id as usize) <= v && vocab.count(id).unwrap_or(0) >= cfg.min_count;
    let docs: Vec<Vec<u32>> =
        docs.iter().map(|d| d.iter().copied().filter(|&id| keep(id)).collect::<Vec<_>>()).filter(|d| d.len() > 1).collect();
    let total_words: u64 = docs.iter().map(|d| d.len() as u64).sum();
    if total_words == 0 || v == 0 {
        return Err(EmbeddingError::EmptyCorpus);
    }
    // word2vec keep probability (sqrt(f/t) + 1) · t / f, f the relative frequency.
    let keep: Vec<f64> = std::iter::once(0.0)
        .chain(vocab.counts().iter().map(|&c| {
            let f = c as f64 / total_words as f64;
            if cfg.sample > 0.0 && f > 0.0 { ((f / cfg.sample).sqrt() + 1.0) * cfg.sample / f } else { 1.0 }
        }))
        .collect();
    let weights: Vec<f64> = vocab.counts().iter().map(|&c| (c.max(1) as f64).powf(0.75)).collect();
    let sampler = WeightedAliasIndex::new(weights).map_err(|e| EmbeddingError::Config(format!("negative sampler: {e}")))?;

    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input = vec![0.0f32; (v + 1) * d];
    for x in input[d..].iter_mut() {
        *x = (rng.gen::<f32>() - 0.5) / d as f32;
    }
    let mut output = vec![0.0f32; (v + 1) * d];
    let schedule = Schedule { lr: cfg.lr, min_lr: cfg.min_lr, total_words: (total_words * cfg.epochs as u64) as f64 };
    let processed = AtomicU64::new(0);
    let mut report = SkipGramReport { epoch_losses: Vec::with_capacity(cfg.epochs), pairs_per_epoch: 0 };

    if cfg.workers == 1 {
        let input_cells = Cell::from_mut(input.as_mut_slice()).as_slice_of_cells();
        let output_cells = Cell::from_mut(output.as_mut_slice()).as_slice_of_cells();
        for epoch in 0..cfg.epochs {
            let (loss, pairs) =
                train_shard(input_cells, output_cells, &docs, cfg, &keep, &sampler, &schedule, &processed, &mut rng);
            log::debug!("skip-gram epoch {epoch}: loss {:.5}", loss / pairs.max(1) as f64);
            report.epoch_losses.push(loss / pairs.max(1) as f64);
            report.pairs_per_epoch = pairs;
        }
    } else {
        let input_atomic: Vec<AtomicU32> = input.iter().map(|x| AtomicU32::new(x.to_bits())).collect();
        let output_atomic: Vec<AtomicU32> = output.iter().map(|x| AtomicU32::new(x.to_bits())).collect();
        let shard = docs.len().div_ceil(cfg.workers);
        for epoch in 0..cfg.epochs {
            let results: Vec<(f64, u64)> = std::thread::scope(|scope| {
                let handles: Vec<_> = docs
                    .chunks(shard.max(1))
                    .enumerate()
                    .map(|(w, chunk)| {
                        let (inp, out, keep, sampler, schedule, processed) =
                            (&input_atomic[..], &output_atomic[..], &keep[..], &sampler, &schedule, &processed);
                        let seed = cfg.seed ^ ((epoch as u64) << 32 | w as u64);
                        scope.spawn(move || {
                            let mut rng = ChaCha8Rng::seed_from_u64(seed);
                            train_shard(inp, out, chunk, cfg, keep, sampler, schedule, processed, &mut rng)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("skip-gram worker panicked")).collect()
            });
            let (loss, pairs) = results.iter().fold((0.0, 0), |acc, r| (acc.0 + r.0, acc.1 + r.1));
            report.epoch_losses.push(loss / pairs.max(1) as f64);
            report.pairs_per_epoch = pairs;
        }
        input = input_atomic.iter().map(|a| f32::from_bits(a.load(Ordering::Relaxed))).collect();
    }

    input[..d].iter_mut().for_each(|x| *x = 0.0);
    let mut matrix = EmbeddingMatrix::new(v, d, input, vocab.hash())?;
    if cfg.center {
        matrix.center();
    }
    Ok((matrix, report))
}

/// Train embeddings on token lists; tokens outside `vocab` are ignored.
pub fn train_skipgram<S: AsRef<str>>(
    token_lists: &[Vec<S>],
    vocab: &Vocabulary,
    cfg: &SkipGramConfig,
) -> Result<(EmbeddingMatrix, SkipGramReport), EmbeddingError> {
    let docs: Vec<Vec<u32>> =
        token_lists.iter().map(|toks| toks.iter().filter_map(|t| vocab.id_of(t.as_ref())).collect()).collect();
    train_skipgram_ids(&docs, vocab, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocabulary;

    fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    /// 200 sentences: "good" and "great" share positive contexts, "bad" only negative ones.
    fn synthetic_corpus() -> Vec<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pos_ctx = ["acting", "wonderful", "loved", "brilliant", "charming"];
        let neg_ctx = ["boring", "awful", "hated", "dull", "waste"];
        (0..200)
            .map(|i| {
                let (ctx, key) = if i % 2 == 0 {
                    (&pos_ctx, if i % 4 == 0 { "good" } else { "great" })
                } else {
                    (&neg_ctx, "bad")
                };
                let mut s: Vec<String> = (0..4).map(|_| ctx[rng.gen_range(0..5)].to_string()).collect();
                s.insert(2, key.to_string());
                s
            })
            .collect()
    }

    fn small_cfg() -> SkipGramConfig {
        SkipGramConfig { dim: 20, window: 2, epochs: 10, sample: 0.0, ..SkipGramConfig::default() }
    }

    #[test]
    fn subsampling_thins_frequent_words() {
        let corpus = synthetic_corpus();
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let full = train_skipgram(&corpus, &vocab, &small_cfg()).unwrap().1.pairs_per_epoch;
        let thinned = SkipGramConfig { sample: 1e-2, ..small_cfg() };
        let kept = train_skipgram(&corpus, &vocab, &thinned).unwrap().1.pairs_per_epoch;
        assert!(kept < full / 2, "{kept} vs {full}");
    }

    #[test]
    fn shared_contexts_give_similar_vectors() {
        let corpus = synthetic_corpus();
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let (emb, report) = train_skipgram(&corpus, &vocab, &small_cfg()).unwrap();
        let row = |w: &str| emb.row(vocab.id_of(w).unwrap() as usize);
        assert!(cosine(row("good"), row("great")) > cosine(row("good"), row("bad")));
        assert!(emb.row(0).iter().all(|x| *x == 0.0));
        assert_eq!(emb.rows(), vocab.len() + 1);
        let l = &report.epoch_losses;
        assert!(l[l.len() - 1] < 0.7 * l[0], "{l:?}");
    }

    #[test]
    fn deterministic_in_single_worker_mode() {
        let corpus = synthetic_corpus();
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let a = train_skipgram(&corpus, &vocab, &small_cfg()).unwrap();
        let b = train_skipgram(&corpus, &vocab, &small_cfg()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn multi_worker_mode_trains() {
        let corpus = synthetic_corpus();
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let cfg = SkipGramConfig { workers: 3, ..small_cfg() };
        let (emb, report) = train_skipgram(&corpus, &vocab, &cfg).unwrap();
        assert!(emb.data().iter().all(|x| x.is_finite()));
        assert!(report.epoch_losses.last() < report.epoch_losses.first());
    }

    #[test]
    fn config_and_corpus_validation() {
        let corpus = synthetic_corpus();
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let cfg = SkipGramConfig { epochs: 0, ..SkipGramConfig::default() };
        assert!(matches!(train_skipgram(&corpus, &vocab, &cfg), Err(EmbeddingError::Config(_))));
        let empty: Vec<Vec<String>> = vec![vec![]];
        assert!(matches!(train_skipgram(&empty, &vocab, &small_cfg()), Err(EmbeddingError::EmptyCorpus)));
    }
}
