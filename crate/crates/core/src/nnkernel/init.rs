use rand::Rng;

use super::tensor::{Scalar, Tensor};

/// Half-width of the Glorot-uniform interval.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let limit = glorot_limit(fan_in, fan_out);
    uniform(shape, limit, rng)
}

/// Values drawn from `U(-limit, limit)`.
pub fn uniform<T: Scalar, R: Rng + ?Sized>(shape: Vec<usize>, limit: f64, rng: &mut R) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.gen_range(-limit..limit))).collect();
    Tensor::new(shape, data).expect("length follows shape")
}
