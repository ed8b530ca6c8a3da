//! Fixtures shared by the kernel benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use renyi_core::JointTable;

/// Strictly positive random joint distribution of shape `c × d`.
pub fn random_joint(c: usize, d: usize, seed: u64) -> JointTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = Array2::from_shape_fn((c, d), |_| rng.random_range(0.05..1.0));
    JointTable::from_counts(&counts).expect("positive counts")
}

/// Random `rows × cols` matrix with entries in `[-1, 1)`.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}
