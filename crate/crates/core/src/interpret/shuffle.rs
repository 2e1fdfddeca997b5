use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nnkernel::{Conv1DParams, Scalar};

/// Unit moved by a shuffle: whole `channels`-long position slices, or single weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShuffleMode {
    #[default]
    Slice,
    Scalar,
}

/// Permute units inside each group of `group` consecutive units.
fn permute_groups<T: Scalar>(data: &mut [T], unit: usize, group: usize, rng: &mut ChaCha8Rng) {
    let mut order: Vec<usize> = (0..group).collect();
    for block in data.chunks_mut(unit * group) {
        order.shuffle(rng);
        let src = block.to_vec();
        for (dst, &from) in block.chunks_mut(unit).zip(&order) {
            dst.copy_from_slice(&src[from * unit..(from + 1) * unit]);
        }
        order.sort_unstable();
    }
}

/// Each filter independently permutes its own units; biases untouched.
pub fn shuffle_within_filters<T: Scalar>(filt: &Conv1DParams<T>, seed: u64, mode: ShuffleMode) -> Conv1DParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = filt.clone();
    let (s, c) = (filt.width(), filt.channels());
    match mode {
        ShuffleMode::Slice => permute_groups(out.weights.data_mut(), c, s, &mut rng),
        ShuffleMode::Scalar => permute_groups(out.weights.data_mut(), 1, s * c, &mut rng),
    }
    out
}

/// One permutation over the units of all filters; biases untouched.
pub fn shuffle_across_filters<T: Scalar>(filt: &Conv1DParams<T>, seed: u64, mode: ShuffleMode) -> Conv1DParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = filt.clone();
    let (f, s, c) = (filt.filters(), filt.width(), filt.channels());
    match mode {
        ShuffleMode::Slice => permute_groups(out.weights.data_mut(), c, f * s, &mut rng),
        ShuffleMode::Scalar => permute_groups(out.weights.data_mut(), 1, f * s * c, &mut rng),
    }
    out
}

/// Fresh Glorot-uniform weights and zero bias with the same shape.
pub fn randomize_first_layer<T: Scalar>(filt: &Conv1DParams<T>, seed: u64) -> Conv1DParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Conv1DParams::glorot(filt.filters(), filt.width(), filt.channels(), filt.stride, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkernel::glorot_limit;

    fn filt(f: usize, s: usize, c: usize) -> Conv1DParams<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = Conv1DParams::glorot(f, s, c, 1, &mut rng);
        p.bias.data_mut().iter_mut().enumerate().for_each(|(i, b)| *b = i as f32);
        p
    }

    fn sorted_slices(p: &Conv1DParams<f32>, range: std::ops::Range<usize>) -> Vec<Vec<u32>> {
        let mut v: Vec<Vec<u32>> = range
            .map(|k| p.slice(k / p.width(), k % p.width()).iter().map(|x| x.to_bits()).collect())
            .collect();
        v.sort();
        v
    }

    #[test]
    fn within_preserves_each_filters_slices() {
        let p = filt(32, 5, 100);
        let q = shuffle_within_filters(&p, 7, ShuffleMode::Slice);
        assert_ne!(p.weights, q.weights);
        assert_eq!(p.bias, q.bias);
        for f in 0..32 {
            assert_eq!(sorted_slices(&p, f * 5..f * 5 + 5), sorted_slices(&q, f * 5..f * 5 + 5));
        }
    }

    #[test]
    fn across_preserves_all_slices_and_is_seeded() {
        let p = filt(32, 5, 100);
        let q = shuffle_across_filters(&p, 7, ShuffleMode::Slice);
        assert_eq!(sorted_slices(&p, 0..160), sorted_slices(&q, 0..160));
        assert_eq!(q, shuffle_across_filters(&p, 7, ShuffleMode::Slice));
        assert_ne!(q, shuffle_across_filters(&p, 8, ShuffleMode::Slice));
    }

    #[test]
    fn width_one_within_is_identity() {
        let p = filt(4, 1, 6);
        assert_eq!(shuffle_within_filters(&p, 3, ShuffleMode::Slice), p);
    }

    #[test]
    fn scalar_mode_preserves_multisets() {
        let p = filt(4, 3, 5);
        let bits = |p: &Conv1DParams<f32>, r: std::ops::Range<usize>| {
            let mut v: Vec<u32> = p.weights.data()[r].iter().map(|x| x.to_bits()).collect();
            v.sort();
            v
        };
        let q = shuffle_within_filters(&p, 2, ShuffleMode::Scalar);
        for f in 0..4 {
            assert_eq!(bits(&p, f * 15..f * 15 + 15), bits(&q, f * 15..f * 15 + 15));
        }
        let r = shuffle_across_filters(&p, 2, ShuffleMode::Scalar);
        assert_eq!(bits(&p, 0..60), bits(&r, 0..60));
    }

    #[test]
    fn random_layer_bounds() {
        let p = filt(32, 5, 100);
        let a = randomize_first_layer(&p, 1);
        let b = randomize_first_layer(&p, 2);
        assert_eq!(a.weights.shape(), &[32, 5, 100]);
        assert!(a.bias.data().iter().all(|v| *v == 0.0));
        let diff = a.weights.data().iter().zip(b.weights.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max);
        assert!(diff > 0.0);
        let limit = glorot_limit(500, 160) as f32;
        assert!(a.weights.data().iter().all(|v| v.abs() <= limit));
    }
}
