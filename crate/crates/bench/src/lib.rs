//! Instance generators shared by the benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spillbound::{BoundProblem, Sense};

/// `BBᵀ / max|BBᵀ|` with `B` uniform on [−1, 1]^{n×(n/2+1)}.
pub fn random_psd(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DMatrix::from_fn(n, n / 2 + 1, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let q = &b * b.transpose();
    let m = q.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    q / m
}

pub fn random_problem(n: usize, z: f64, seed: u64) -> BoundProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB0B);
    let bar_w = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    BoundProblem::binary(bar_w, random_psd(n, seed), z, Sense::Max).expect("valid problem")
}
