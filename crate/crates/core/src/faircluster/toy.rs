//! Synthetic instances: planted Gaussian clusters with two one-sided groups,
//! and the four-point instance on which frozen proportions make the
//! assignments oscillate.

use ndarray::{array, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ClusterState;

pub const TOY_CLUSTERS: usize = 5;
pub const TOY_POINTS_PER_CLUSTER: usize = 500;
/// Planted cluster whose points are all privileged.
pub const TOY_ALL_PRIVILEGED: usize = 1;
/// Planted cluster whose points are all unprivileged.
pub const TOY_NONE_PRIVILEGED: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyData {
    pub points: Array2<f64>,
    pub sensitive: Vec<usize>,
    /// 5 × 2.
    pub true_centers: Array2<f64>,
    /// Planted cluster of every point.
    pub planted: Vec<usize>,
}

/// Five centers uniform on `[0, 10]²`, 500 Gaussian points around each with
/// standard deviation 0.05 × the smallest center gap. Points of cluster 1 are
/// privileged, points of cluster 3 are not, the rest flip a fair coin.
/// Rows are shuffled.
pub fn toy_dataset(seed: u64) -> ToyData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let true_centers = Array2::from_shape_fn((TOY_CLUSTERS, 2), |_| rng.random_range(0.0..10.0));
    let mut gap = f64::INFINITY;
    for a in 0..TOY_CLUSTERS {
        for b in a + 1..TOY_CLUSTERS {
            let d = (&true_centers.row(a) - &true_centers.row(b)).mapv(|v: f64| v * v).sum().sqrt();
            gap = gap.min(d);
        }
    }
    let noise = Normal::new(0.0, 0.05 * gap).expect("positive spread");
    let total = TOY_CLUSTERS * TOY_POINTS_PER_CLUSTER;
    let mut rows: Vec<([f64; 2], usize, usize)> = Vec::with_capacity(total);
    for c in 0..TOY_CLUSTERS {
        for _ in 0..TOY_POINTS_PER_CLUSTER {
            let x = [
                true_centers[[c, 0]] + noise.sample(&mut rng),
                true_centers[[c, 1]] + noise.sample(&mut rng),
            ];
            let s = match c {
                TOY_ALL_PRIVILEGED => 1,
                TOY_NONE_PRIVILEGED => 0,
                _ => usize::from(rng.random_bool(0.5)),
            };
            rows.push((x, s, c));
        }
    }
    rows.shuffle(&mut rng);
    ToyData {
        points: Array2::from_shape_fn((total, 2), |(n, j)| rows[n].0[j]),
        sensitive: rows.iter().map(|r| r.1).collect(),
        true_centers,
        planted: rows.iter().map(|r| r.2).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub points: Array2<f64>,
    pub sensitive: Vec<usize>,
    /// Points 1, 2 in cluster 0 and points 3, 4 in cluster 1, centers ∓4.5.
    pub state: ClusterState,
    /// The assignment after one frozen-proportion sweep with large λ.
    pub swapped: Vec<usize>,
}

/// `X = (−5, −4, 4, 5)`, `s = (1, 1, 0, 0)`.
pub fn counterexample() -> Counterexample {
    let points = array![[-5.0], [-4.0], [4.0], [5.0]];
    let sensitive = vec![1, 1, 0, 0];
    let state = ClusterState::from_assignments(vec![0, 0, 1, 1], array![[-4.5], [4.5]], &sensitive)
        .expect("valid instance");
    Counterexample {
        points,
        sensitive,
        state,
        swapped: vec![1, 1, 0, 0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_is_deterministic_and_planted() {
        let a = toy_dataset(7);
        assert_eq!(a, toy_dataset(7));
        assert_ne!(a.points, toy_dataset(8).points);
        assert_eq!(a.points.nrows(), 2500);
        for (&c, &s) in a.planted.iter().zip(&a.sensitive) {
            match c {
                TOY_ALL_PRIVILEGED => assert_eq!(s, 1),
                TOY_NONE_PRIVILEGED => assert_eq!(s, 0),
                _ => {}
            }
        }
    }

    #[test]
    fn counterexample_initial_proportions() {
        let ce = counterexample();
        assert_eq!(ce.state.proportions, vec![1.0, 0.0]);
    }
}
