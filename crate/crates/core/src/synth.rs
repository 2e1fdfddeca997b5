//! Seeded generator of movie-review-like corpora in the `{train,test}/{pos,neg}/*.txt` layout.
//!
//! Reviews mix Zipf-distributed neutral words (with per-review topics), polar
//! cue phrases, and negated phrases ("hardly brilliant") whose meaning is the
//! opposite of the words' polarity, so word order carries part of the label signal.
//! Stopwords, markup, numbers and punctuation are sprinkled in as noise.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use rand::distributions::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, WeightedAliasIndex};
use serde::{Deserialize, Serialize};

use crate::corpus::pinned_lists;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Size of the neutral word pool.
    pub neutral_words: usize,
    /// Cue words per polarity.
    pub cue_words: usize,
    pub topics: usize,
    /// Probability that a neutral slot draws from the review's topic.
    pub topic_share: f64,
    pub zipf_exponent: f64,
    /// Median number of content words per review.
    pub median_words: f64,
    pub length_sigma: f64,
    /// Probability that a content slot starts a sentiment phrase.
    pub cue_rate: f64,
    /// Phrases hold 1..=max_phrase cues sharing one meaning.
    pub max_phrase: usize,
    /// Probability that a cue agrees with the review's label.
    pub cue_fidelity: f64,
    /// Share of reviews whose phrase meanings ignore the label.
    pub ambiguous_rate: f64,
    /// Probability that a phrase is written as negator + opposite-polarity words.
    pub negation_rate: f64,
    /// Probability that a negator directly follows a phrase without negating it.
    pub trailing_negator_rate: f64,
    /// Stopwords inserted per content word.
    pub stopword_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_per_class: 2_500,
            test_per_class: 1_000,
            neutral_words: 40_000,
            cue_words: 150,
            topics: 20,
            topic_share: 0.25,
            zipf_exponent: 1.0,
            median_words: 110.0,
            length_sigma: 0.5,
            cue_rate: 0.12,
            max_phrase: 4,
            cue_fidelity: 0.9,
            ambiguous_rate: 0.1,
            negation_rate: 0.4,
            trailing_negator_rate: 0.0,
            stopword_rate: 0.6,
        }
    }
}

const NEGATORS: [&str; 6] = ["hardly", "barely", "never", "scarcely", "seldom", "rarely"];
const POSITIVE_SEEDS: [&str; 16] = [
    "great", "excellent", "brilliant", "wonderful", "superb", "delightful", "moving", "masterpiece", "charming",
    "gripping", "beautiful", "enjoyable", "memorable", "stunning", "clever", "touching",
];
const NEGATIVE_SEEDS: [&str; 16] = [
    "awful", "terrible", "boring", "dull", "waste", "horrible", "pointless", "mediocre", "tedious", "lame",
    "bland", "dreadful", "clumsy", "forgettable", "annoying", "predictable",
];

struct Pools {
    neutral: Vec<&'static str>,
    neutral_dist: WeightedAliasIndex<f64>,
    topics: Vec<Vec<&'static str>>,
    topic_dist: WeightedAliasIndex<f64>,
    cues: [Vec<&'static str>; 2],
    cue_dist: WeightedAliasIndex<f64>,
    stopwords: Vec<&'static str>,
}

fn zipf(n: usize, s: f64) -> WeightedAliasIndex<f64> {
    WeightedAliasIndex::new((1..=n).map(|r| (r as f64).powf(-s)).collect()).expect("non-empty pool")
}

fn build_pools(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> io::Result<Pools> {
    let (dictionary, stopwords) = pinned_lists();
    let stop: HashSet<&str> = stopwords.iter().copied().collect();
    let reserved: HashSet<&str> =
        NEGATORS.iter().chain(&POSITIVE_SEEDS).chain(&NEGATIVE_SEEDS).copied().collect();
    let mut candidates: Vec<&'static str> = dictionary
        .into_iter()
        .filter(|w| (3..=12).contains(&w.len()) && w.bytes().all(|b| b.is_ascii_lowercase()))
        .filter(|w| !stop.contains(w) && !reserved.contains(w))
        .collect();
    candidates.shuffle(rng);
    let topic_size = 150;
    let needed = cfg.neutral_words + 2 * cfg.cue_words + cfg.topics * topic_size;
    if candidates.len() < needed || cfg.cue_words < POSITIVE_SEEDS.len() || cfg.topics == 0 || cfg.max_phrase == 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "word pools do not fit the dictionary"));
    }
    let mut it = candidates.into_iter();
    let mut take = |n: usize| -> Vec<&'static str> { it.by_ref().take(n).collect() };
    let mut pos: Vec<&str> = POSITIVE_SEEDS.to_vec();
    pos.extend(take(cfg.cue_words - POSITIVE_SEEDS.len()));
    let mut neg: Vec<&str> = NEGATIVE_SEEDS.to_vec();
    neg.extend(take(cfg.cue_words - NEGATIVE_SEEDS.len()));
    let neutral = take(cfg.neutral_words);
    let topics = (0..cfg.topics).map(|_| take(topic_size)).collect();
    Ok(Pools {
        neutral_dist: zipf(cfg.neutral_words, cfg.zipf_exponent),
        neutral,
        topics,
        topic_dist: zipf(topic_size, cfg.zipf_exponent),
        cue_dist: zipf(cfg.cue_words, cfg.zipf_exponent * 0.8),
        cues: [neg, pos],
        stopwords,
    })
}

/// Content words of one review (before noise), label 1 = positive.
fn content(cfg: &SynthConfig, pools: &Pools, label: usize, rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let len_dist = LogNormal::new(cfg.median_words.ln(), cfg.length_sigma).expect("valid length distribution");
    let len = (len_dist.sample(rng).round() as usize).clamp(10, 1_200);
    let topic = &pools.topics[rng.gen_range(0..pools.topics.len())];
    let fidelity = if rng.gen_bool(cfg.ambiguous_rate) { 0.5 } else { cfg.cue_fidelity };
    let mut words = Vec::with_capacity(len + 8);
    while words.len() < len {
        if rng.gen_bool(cfg.cue_rate) {
            let meaning = if rng.gen_bool(fidelity) { label } else { 1 - label };
            let shown = if rng.gen_bool(cfg.negation_rate) {
                words.push(NEGATORS[rng.gen_range(0..NEGATORS.len())]);
                1 - meaning
            } else {
                meaning
            };
            for _ in 0..rng.gen_range(1..=cfg.max_phrase) {
                words.push(pools.cues[shown][pools.cue_dist.sample(rng)]);
            }
            if rng.gen_bool(cfg.trailing_negator_rate) {
                words.push(NEGATORS[rng.gen_range(0..NEGATORS.len())]);
                words.push(pools.neutral[pools.neutral_dist.sample(rng)]);
            }
        } else if rng.gen_bool(cfg.topic_share) {
            words.push(topic[pools.topic_dist.sample(rng)]);
        } else {
            words.push(pools.neutral[pools.neutral_dist.sample(rng)]);
        }
    }
    words
}

/// Raw review text: content words with stopwords, punctuation, numbers and line-break tags mixed in.
fn render(cfg: &SynthConfig, pools: &Pools, words: &[&str], rating: u32, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    let mut sentence_len = 0usize;
    for (i, w) in words.iter().enumerate() {
        let start = sentence_len == 0;
        let n_stop = (cfg.stopword_rate + rng.gen_range(-0.5..0.5f64)).round().max(0.0) as usize;
        let is_negator = NEGATORS.contains(w);
        for k in 0..n_stop {
            if is_negator && k == n_stop - 1 && i + 1 < words.len() {
                break;
            }
            push_word(&mut out, pools.stopwords[rng.gen_range(0..pools.stopwords.len())], start && k == 0);
        }
        push_word(&mut out, w, start && n_stop == 0);
        sentence_len += 1;
        if !is_negator && sentence_len > 6 && rng.gen_bool(0.12) {
            out.push(if rng.gen_bool(0.85) { '.' } else { '!' });
            sentence_len = 0;
            if rng.gen_bool(0.08) {
                out.push_str("<br /><br />");
            }
        } else if !is_negator && rng.gen_bool(0.04) {
            out.push(',');
        }
        if rng.gen_bool(0.005) {
            out.push_str(&format!(" {}", rng.gen_range(1..2_020)));
        }
    }
    out.push_str(&format!(". {rating}/10"));
    out
}

fn push_word(out: &mut String, word: &str, capitalize: bool) {
    if !out.is_empty() && !out.ends_with('>') {
        out.push(' ');
    }
    if capitalize {
        let mut chars = word.chars();
        if let Some(first) = chars.next() {
            out.extend(first.to_uppercase());
            out.push_str(chars.as_str());
        }
    } else {
        out.push_str(word);
    }
}

/// Write `root/train/{pos,neg}` and, when `test_per_class > 0`, `root/test/{pos,neg}`.
pub fn write_synthetic_corpus(root: &Path, cfg: &SynthConfig) -> io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pools = build_pools(cfg, &mut rng)?;
    for (split, per_class) in [("train", cfg.train_per_class), ("test", cfg.test_per_class)] {
        if per_class == 0 {
            continue;
        }
        for (sub, label) in [("pos", 1usize), ("neg", 0usize)] {
            let dir = root.join(split).join(sub);
            fs::create_dir_all(&dir)?;
            for i in 0..per_class {
                let rating = if label == 1 { rng.gen_range(7..=10) } else { rng.gen_range(1..=4) };
                let words = content(cfg, &pools, label, &mut rng);
                let text = render(cfg, &pools, &words, rating, &mut rng);
                fs::write(dir.join(format!("{i}_{rating}.txt")), text)?;
            }
        }
    }
    Ok(())
}
