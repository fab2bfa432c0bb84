//! Shared fixtures for the benchmarks.

use gftnav_core::grounding::FeatureCube;
use gftnav_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

pub fn random_cube(channels: usize, locations: usize, rng: &mut ChaCha8Rng) -> FeatureCube {
    FeatureCube::new(channels, locations, (0..channels * locations).map(|_| rng.random_range(0.0..1.0)).collect())
        .expect("shape")
}
