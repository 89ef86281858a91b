//! Shared fixtures for the benchmarks.

use lfuq_core::providers::EmbeddingVector;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` points in `dim` dimensions scattered around `k` well-separated centers.
pub fn clustered_points(n: usize, dim: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| rng.random_range(-20.0..20.0)).collect())
        .collect();
    DMatrix::from_fn(n, dim, |i, j| centers[i % k][j] + rng.random_range(-1.0..1.0))
}

/// Random dense embeddings, as an embedding endpoint would return.
pub fn embeddings(n: usize, dim: usize, seed: u64) -> Vec<EmbeddingVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| EmbeddingVector((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect()
}
