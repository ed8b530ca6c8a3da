//! Seeded synthetic classification datasets.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::model::Batch;

const YEQUALSS_DIM: usize = 2;
/// Distance of each blob centre from the origin along the first axis.
pub const YEQUALSS_OFFSET: f64 = 3.0;

fn shuffled(rows: &mut [(Vec<f64>, usize, usize)], rng: &mut ChaCha8Rng, n_groups: usize) -> Result<Batch> {
    rows.shuffle(rng);
    let p = rows.first().map_or(0, |r| r.0.len());
    let x = Array2::from_shape_fn((rows.len(), p), |(n, j)| rows[n].0[j]);
    Batch::new(
        x,
        rows.iter().map(|r| r.1).collect(),
        rows.iter().map(|r| r.2).collect(),
        2,
        n_groups,
    )
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two unit-variance Gaussian blobs centred at `±(3, 0)`; the label and the
/// sensitive attribute are both the blob index. Exactly `n/2` per blob.
/// The Bayes error is `Φ(−3) ≈ 0.0013`.
pub fn synth_yequalss(n: usize, seed: u64) -> Result<Batch> {
    if n == 0 || n % 2 != 0 {
        return Err(invalid(format!("synth_yequalss needs a positive even n, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let g = usize::from(k >= n / 2);
        let sign = if g == 1 { 1.0 } else { -1.0 };
        let x: Vec<f64> = (0..YEQUALSS_DIM)
            .map(|j| if j == 0 { YEQUALSS_OFFSET * sign } else { 0.0 } + gauss(&mut rng))
            .collect();
        rows.push((x, g, g));
    }
    shuffled(&mut rows, &mut rng, 2)
}

/// Layout of the zero-linear-correlation fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCorrDesign {
    /// Share of each of the three groups; the outer two must be equal.
    pub group_share: [f64; 3],
    /// `P(Y = 1 | S = g)`; the outer two must be equal.
    pub positive_rate: [f64; 3],
    /// Class separation of the informative feature.
    pub separation: f64,
}

impl Default for ZeroCorrDesign {
    fn default() -> Self {
        Self {
            group_share: [0.25, 0.5, 0.25],
            positive_rate: [0.2, 0.8, 0.2],
            separation: 1.5,
        }
    }
}

/// Three groups coded 0, 1, 2 whose label rates are symmetric about the
/// middle group, so any predictor built from the features has zero
/// covariance with the numeric code while still depending on S.
///
/// Features: `x₁ = (2y − 1)·separation + ε` and a pure-noise `x₂`. Cell
/// sizes are exact (rounded per cell), so the label/code covariance is 0.
pub fn synth_zero_linear_corr(n: usize, seed: u64, design: &ZeroCorrDesign) -> Result<Batch> {
    let [a, b, c] = design.group_share;
    if (a - c).abs() > 1e-12 || (design.positive_rate[0] - design.positive_rate[2]).abs() > 1e-12 {
        return Err(invalid("outer groups must share size and label rate"));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(invalid("group shares must sum to 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outer = (a * n as f64).round() as usize;
    let sizes = [outer, n - 2 * outer, outer];
    let mut rows = Vec::with_capacity(n);
    for (g, &m) in sizes.iter().enumerate() {
        let positives = (design.positive_rate[g] * m as f64).round() as usize;
        for k in 0..m {
            let y = usize::from(k < positives);
            let sign = if y == 1 { 1.0 } else { -1.0 };
            let x = vec![sign * design.separation + gauss(&mut rng), gauss(&mut rng)];
            rows.push((x, y, g));
        }
    }
    shuffled(&mut rows, &mut rng, 3)
}

/// Binary S independent of a balanced binary Y (exactly `n/4` per cell).
/// The only informative feature is shifted by S:
/// `x₁ = 1.5·(2y − 1) + 0.75·(2s − 1) + ε`, so a plain classifier's
/// predictions depend on S inside each label slice. `x₂` is noise.
pub fn synth_eo(n: usize, seed: u64) -> Result<Batch> {
    if n == 0 || n % 4 != 0 {
        return Err(invalid(format!("synth_eo needs n divisible by 4, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let (y, s) = ((k / (n / 4)) / 2, (k / (n / 4)) % 2);
        let x1 = 1.5 * (2.0 * y as f64 - 1.0) + 0.75 * (2.0 * s as f64 - 1.0) + gauss(&mut rng);
        rows.push((vec![x1, gauss(&mut rng)], y, s));
    }
    shuffled(&mut rows, &mut rng, 2)
}
