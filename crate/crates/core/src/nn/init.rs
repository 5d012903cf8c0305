use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::rng::rng_from_seed;

use super::{Scalar, Tensor};

/// Seeded parameter initialiser. Values are drawn in `f64` and then cast, so
/// `f32` and `f64` models built from the same seed agree up to rounding.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: rng_from_seed(seed),
        }
    }

    /// He (fan-in) normal initialisation.
    pub fn he<T: Scalar>(&mut self, shape: [usize; 4], fan_in: usize) -> Tensor<T> {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        self.normal(shape, std)
    }

    pub fn normal<T: Scalar>(&mut self, shape: [usize; 4], std: f64) -> Tensor<T> {
        let dist = Normal::new(0.0, std).expect("finite std");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::cast(dist.sample(&mut self.rng))).collect();
        Tensor::param(shape, data).expect("shape matches data")
    }

    pub fn zeros<T: Scalar>(&mut self, shape: [usize; 4]) -> Tensor<T> {
        Tensor::param(shape, vec![T::zero(); shape.iter().product()]).expect("shape matches data")
    }
}
