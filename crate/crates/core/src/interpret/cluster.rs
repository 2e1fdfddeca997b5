use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{InterpretError, Rows};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once an iteration lowers the SSE by less than `tol` times its previous value.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { seed: 0, max_iter: 100, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub assignment: Vec<usize>,
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub sse: f64,
    pub sizes: Vec<usize>,
    /// SSE after every assignment step.
    pub sse_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per row (ties to the lowest id) and the resulting SSE.
fn assign(rows: &Rows, centroids: &[f64], k: usize) -> (Vec<usize>, f64) {
    let d = rows.dim;
    let best: Vec<(usize, f64)> = (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let r = rows.row(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let dist = sq_dist(r, &centroids[c * d..(c + 1) * d]);
                if dist < best.1 {
                    best = (c, dist);
                }
            }
            best
        })
        .collect();
    let sse = best.iter().map(|b| b.1).sum();
    (best.into_iter().map(|b| b.0).collect(), sse)
}

fn plus_plus(rows: &Rows, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (n, d) = (rows.len(), rows.dim);
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(rows.row(i), rows.row(chosen[0]))).collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            // Every remaining row coincides with a chosen centre.
            Err(_) => (0..n).find(|i| !chosen.contains(i)).expect("k <= n"),
        };
        chosen.push(next);
        let c = rows.row(next).to_vec();
        nearest.par_iter_mut().enumerate().for_each(|(i, m)| *m = m.min(sq_dist(rows.row(i), &c)));
    }
    let mut centroids = Vec::with_capacity(k * d);
    for &i in &chosen {
        centroids.extend_from_slice(rows.row(i));
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeds. An empty cluster keeps its previous centroid.
pub fn kmeans(rows: &Rows, k: usize, cfg: &KMeansConfig) -> Result<Clustering, InterpretError> {
    let n = rows.len();
    if k == 0 || k > n {
        return Err(InterpretError::InvalidK { k, n });
    }
    let d = rows.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = plus_plus(rows, k, &mut rng);
    let (mut assignment, mut sse) = assign(rows, &centroids, k);
    let mut history = vec![sse];
    for _ in 0..cfg.max_iter {
        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            sums[c * d..(c + 1) * d].iter_mut().zip(rows.row(i)).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = counts[c] as f64;
                for (dst, s) in centroids[c * d..(c + 1) * d].iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                    *dst = s / inv;
                }
            }
        }
        let (next, next_sse) = assign(rows, &centroids, k);
        let improvement = sse - next_sse;
        let changed = next != assignment;
        assignment = next;
        sse = next_sse;
        history.push(sse);
        if !changed || improvement < cfg.tol * history[history.len() - 2] {
            break;
        }
    }
    let mut sizes = vec![0usize; k];
    assignment.iter().for_each(|&c| sizes[c] += 1);
    Ok(Clustering { k, assignment, centroids, sse, sizes, sse_history: history })
}

/// One row of the clustering table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub k: usize,
    pub sse: f64,
    /// Cluster holding the most word rows (lowest id on ties).
    pub top_cluster: usize,
    pub top_word_count: usize,
    /// `top_word_count / V · 100`.
    pub top_percent: f64,
    /// Share of the filter slices that fall in the top cluster.
    pub filter_fraction: f64,
}

/// Summarise a clustering over `word_count` word rows followed by filter-slice rows.
pub fn cluster_report(clustering: &Clustering, word_count: usize) -> Result<ClusterRow, InterpretError> {
    let n = clustering.assignment.len();
    if word_count == 0 || word_count > n {
        return Err(InterpretError::Shape(format!("{word_count} word rows among {n} clustered rows")));
    }
    let mut word_sizes = vec![0usize; clustering.k];
    clustering.assignment[..word_count].iter().for_each(|&c| word_sizes[c] += 1);
    let (top, &top_count) =
        word_sizes.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).expect("k >= 1");
    let filters = &clustering.assignment[word_count..];
    let filter_fraction = if filters.is_empty() {
        0.0
    } else {
        filters.iter().filter(|&&c| c == top).count() as f64 / filters.len() as f64
    };
    Ok(ClusterRow {
        k: clustering.k,
        sse: clustering.sse,
        top_cluster: top,
        top_word_count: top_count,
        top_percent: 100.0 * top_count as f64 / word_count as f64,
        filter_fraction,
    })
}

pub fn write_cluster_csv(rows: &[ClusterRow], path: &Path) -> Result<(), InterpretError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "sse", "most_populated_count", "most_populated_percent", "filter_fraction"])?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            format!("{:.6}", r.sse),
            r.top_word_count.to_string(),
            format!("{:.2}", r.top_percent),
            format!("{:.4}", r.filter_fraction),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(points: &[[f64; 2]]) -> Rows {
        Rows::new(points.iter().flatten().copied().collect(), 2).unwrap()
    }

    #[test]
    fn separated_blobs_split_cleanly() {
        let r = rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]]);
        let c = kmeans(&r, 2, &KMeansConfig::default()).unwrap();
        assert_eq!(c.assignment[0], c.assignment[1]);
        assert_eq!(c.assignment[2], c.assignment[3]);
        assert_ne!(c.assignment[0], c.assignment[2]);
        // Each blob contributes 2 · 0.5² = 0.5.
        assert!((c.sse - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_one_and_k_n() {
        let r = rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 0.0]]);
        let one = kmeans(&r, 1, &KMeansConfig::default()).unwrap();
        // Mean (3, 2): squared deviations 4 + 4 + 8.
        assert!((one.sse - 16.0).abs() < 1e-12);
        let all = kmeans(&r, 3, &KMeansConfig::default()).unwrap();
        assert_eq!(all.sse, 0.0);
        assert!(matches!(kmeans(&r, 4, &KMeansConfig::default()), Err(InterpretError::InvalidK { k: 4, n: 3 })));
    }

    #[test]
    fn duplicate_rows_still_seed() {
        let r = rows(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        let c = kmeans(&r, 2, &KMeansConfig::default()).unwrap();
        assert_eq!(c.sse, 0.0);
        assert_eq!(c.sizes.iter().sum::<usize>(), 3);
    }

    #[test]
    fn filters_at_the_word_mean_join_the_word_cluster() {
        let mut pts: Vec<[f64; 2]> = (0..50).map(|i| [(i % 7) as f64 * 0.1, (i % 5) as f64 * 0.1]).collect();
        pts.extend((0..5).map(|i| [20.0 + i as f64 * 0.1, 20.0]));
        let words = pts.len();
        let mean = [0.3, 0.2];
        pts.extend(std::iter::repeat_n(mean, 10));
        let c = kmeans(&rows(&pts), 2, &KMeansConfig::default()).unwrap();
        let row = cluster_report(&c, words).unwrap();
        assert_eq!(row.top_word_count, 50);
        assert_eq!(row.filter_fraction, 1.0);
        assert!((row.top_percent - 100.0 * 50.0 / 55.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn sse_never_increases(seed in 0u64..500, k in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..60 * 3).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            let r = Rows::new(data, 3).unwrap();
            let c = kmeans(&r, k, &KMeansConfig { seed, ..KMeansConfig::default() }).unwrap();
            prop_assert!(c.sse_history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
            prop_assert_eq!(c.sizes.iter().sum::<usize>(), 60);
        }
    }
}
