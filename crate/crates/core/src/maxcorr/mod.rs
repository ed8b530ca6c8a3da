//! Exact maximal (Hirschfeld–Gebelein–Rényi) correlation for discrete
//! variables.
//!
//! For `a ∈ {1..c}` and `b ∈ {1..d}` the maximal correlation is the second
//! singular value of `Q = [P(a=i, b=j) / sqrt(P(a=i) P(b=j))]`. The top
//! singular triplet of `Q` is always `(1, √P(a), √P(b))`, so the second
//! triplet carries all of the dependence.
//!
//! Indices are zero-based throughout: a `c × d` table has rows `0..c` for `a`
//! and columns `0..d` for `b`.

mod svd;

pub use svd::{svd_small, SvdResult, DEFAULT_TOL as SVD_TOL, MAX_DIM, MAX_SWEEPS};

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{invalid, shape, Error, Result};

/// Default lower bound applied to estimated marginals before division.
pub const DEFAULT_FLOOR: f64 = 1e-6;

const NORMALIZATION_TOL: f64 = 1e-9;
const SIMPLEX_TOL: f64 = 1e-9;

/// A validated joint probability table `P(a=i, b=j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    probs: Array2<f64>,
}

impl JointTable {
    /// Validates nonnegativity and normalization (within 1e-9).
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(shape("joint table must be non-empty"));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(invalid(format!("joint table entry {bad} is not a probability")));
        }
        let sum = probs.sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self { probs })
    }

    /// Normalizes a table of nonnegative counts.
    pub fn from_counts(counts: &Array2<f64>) -> Result<Self> {
        let total = counts.sum();
        if !(total > 0.0) {
            return Err(invalid("count table has no mass"));
        }
        Self::new(counts / total)
    }

    /// Empirical joint of two discrete samples.
    pub fn from_samples(a: &[usize], b: &[usize], c: usize, d: usize) -> Result<Self> {
        if a.len() != b.len() {
            return Err(shape(format!("sample lengths {} and {}", a.len(), b.len())));
        }
        let mut counts = Array2::<f64>::zeros((c, d));
        for (&i, &j) in a.iter().zip(b) {
            if i >= c || j >= d {
                return Err(invalid(format!("sample ({i}, {j}) outside {c}x{d} alphabet")));
            }
            counts[[i, j]] += 1.0;
        }
        Self::from_counts(&counts)
    }

    pub fn probs(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.probs.dim()
    }

    pub fn row_marginal(&self) -> Array1<f64> {
        self.probs.sum_axis(Axis(1))
    }

    pub fn col_marginal(&self) -> Array1<f64> {
        self.probs.sum_axis(Axis(0))
    }
}

/// The normalized joint `Q` together with the marginals used to build it.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    pub q: Array2<f64>,
    /// `P(a = i)`, after flooring.
    pub row_marginal: Array1<f64>,
    /// `P(b = j)`, after flooring.
    pub col_marginal: Array1<f64>,
}

impl QMatrix {
    pub fn svd(&self) -> Result<SvdResult> {
        svd_small(self.q.view(), SVD_TOL)
    }

    /// Second singular value, or 0 when `Q` has a single column or row.
    pub fn sigma2(&self) -> Result<f64> {
        let s = self.svd()?;
        Ok(s.singular_values.get(1).copied().unwrap_or(0.0))
    }
}

/// `q_ij = P(i, j) / sqrt(P(i) P(j))`. Rejects zero marginals.
pub fn q_from_joint(joint: &JointTable) -> Result<QMatrix> {
    q_from_joint_floored(joint, 0.0)
}

/// As [`q_from_joint`], with both marginals clamped below at `floor` first.
pub fn q_from_joint_floored(joint: &JointTable, floor: f64) -> Result<QMatrix> {
    let rows = floor_marginal(joint.row_marginal(), floor, "row")?;
    let cols = floor_marginal(joint.col_marginal(), floor, "column")?;
    let mut q = joint.probs.clone();
    for ((i, j), v) in q.indexed_iter_mut() {
        *v /= (rows[i] * cols[j]).sqrt();
    }
    Ok(QMatrix {
        q,
        row_marginal: rows,
        col_marginal: cols,
    })
}

fn floor_marginal(mut m: Array1<f64>, floor: f64, axis: &'static str) -> Result<Array1<f64>> {
    m.mapv_inplace(|p| p.max(floor));
    if let Some(index) = m.iter().position(|&p| p <= 0.0) {
        return Err(Error::ZeroMarginal { axis, index });
    }
    Ok(m)
}

/// Maximal correlation of a discrete joint: σ₂(Q).
pub fn renyi_discrete(joint: &JointTable) -> Result<f64> {
    Ok(q_from_joint(joint)?.sigma2()?.clamp(0.0, 1.0))
}

/// Closed-form maximal correlation when `b` is binary.
#[derive(Debug, Clone, PartialEq)]
pub struct RenyiBinaryResult {
    pub rho: f64,
    /// Minimum of `E[(wᵀã − b̃)²]` over `w`, with `b̃ = b − 1/2`.
    pub gamma: f64,
    /// The minimizer `w*`.
    pub w_star: Vec<f64>,
    /// `P(b = 1)`.
    pub q_prob: f64,
}

/// Maximal correlation through the least-squares characterization for a
/// `c × 2` joint (column 1 is `b = 1`).
///
/// The quadratic `Σ wᵢ² pᵢ − Σ wᵢ (pᵢ₁ − pᵢ₀) + 1/4` separates per
/// coordinate, giving `wᵢ* = (pᵢ₁ − pᵢ₀) / (2pᵢ)`.
pub fn renyi_binary(joint: &JointTable) -> Result<RenyiBinaryResult> {
    let (c, d) = joint.dims();
    if d != 2 {
        return Err(shape(format!("binary route needs a c x 2 joint, got {c}x{d}")));
    }
    let p = joint.probs();
    let q_prob = p.column(1).sum();
    if q_prob <= 0.0 || q_prob >= 1.0 {
        return Err(Error::ZeroMarginal {
            axis: "column",
            index: usize::from(q_prob <= 0.0),
        });
    }
    let mut w_star = Vec::with_capacity(c);
    let mut gamma = 0.25;
    // q(1−q) − γ, accumulated as Σ (pᵢ₁ − q·pᵢ)² / pᵢ to avoid cancellation
    // near independence.
    let mut explained = 0.0;
    for i in 0..c {
        let (p0, p1) = (p[[i, 0]], p[[i, 1]]);
        let pi = p0 + p1;
        if pi <= 0.0 {
            return Err(Error::ZeroMarginal { axis: "row", index: i });
        }
        let w = (p1 - p0) / (2.0 * pi);
        gamma += w * w * pi - w * (p1 - p0);
        explained += (p1 - q_prob * pi).powi(2) / pi;
        w_star.push(w);
    }
    let rho = (explained / (q_prob * (1.0 - q_prob))).clamp(0.0, 1.0).sqrt();
    Ok(RenyiBinaryResult {
        rho,
        gamma,
        w_star,
        q_prob,
    })
}

/// Estimate `Q` for `(Ŷ, S)` from soft classifier outputs.
///
/// `soft_probs` is N × c with rows on the simplex; `sensitive[n] ∈ 0..d`.
/// `P̂(Ŷ=i) = mean_n F_i(xₙ)`, `P̂(S=j) = |X_j| / N` and
/// `P̂(Ŷ=i, S=j) = (1/N) Σ_{n ∈ X_j} F_i(xₙ)`; both marginals are floored at
/// `floor` before the division.
pub fn empirical_q(
    soft_probs: ArrayView2<'_, f64>,
    sensitive: &[usize],
    n_groups: usize,
    floor: f64,
) -> Result<QMatrix> {
    let joint = empirical_joint(soft_probs, sensitive, n_groups)?;
    let n = soft_probs.nrows() as f64;
    let mut row = joint.sum_axis(Axis(1));
    row.mapv_inplace(|p| p.max(floor));
    let mut col = group_sizes(sensitive, n_groups).mapv(|s| s / n);
    col.mapv_inplace(|p| p.max(floor));
    let mut q = joint;
    for ((i, j), v) in q.indexed_iter_mut() {
        *v /= (row[i] * col[j]).sqrt();
    }
    Ok(QMatrix {
        q,
        row_marginal: row,
        col_marginal: col,
    })
}

/// Unnormalized soft joint `(1/N) Σ_{n ∈ X_j} F_i(xₙ)` with input checks.
pub(crate) fn empirical_joint(
    soft_probs: ArrayView2<'_, f64>,
    sensitive: &[usize],
    n_groups: usize,
) -> Result<Array2<f64>> {
    let (n, c) = soft_probs.dim();
    if n == 0 || c == 0 {
        return Err(shape("empty probability matrix"));
    }
    if sensitive.len() != n {
        return Err(shape(format!(
            "{} sensitive labels for {n} probability rows",
            sensitive.len()
        )));
    }
    for (row, r) in soft_probs.axis_iter(Axis(0)).enumerate() {
        let sum = r.sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL || r.iter().any(|&p| p < -SIMPLEX_TOL) {
            return Err(Error::OffSimplex { row, sum });
        }
    }
    let sizes = group_sizes_checked(sensitive, n_groups)?;
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyGroup(g));
    }
    let mut joint = Array2::<f64>::zeros((c, n_groups));
    for (r, &s) in soft_probs.axis_iter(Axis(0)).zip(sensitive) {
        let mut col = joint.column_mut(s);
        col += &r;
    }
    joint /= n as f64;
    Ok(joint)
}

fn group_sizes_checked(sensitive: &[usize], n_groups: usize) -> Result<Vec<usize>> {
    let mut sizes = vec![0usize; n_groups];
    for &s in sensitive {
        *sizes
            .get_mut(s)
            .ok_or_else(|| invalid(format!("sensitive value {s} outside 0..{n_groups}")))? += 1;
    }
    Ok(sizes)
}

fn group_sizes(sensitive: &[usize], n_groups: usize) -> Array1<f64> {
    let mut sizes = Array1::<f64>::zeros(n_groups);
    for &s in sensitive {
        sizes[s] += 1.0;
    }
    sizes
}

/// Unit vector `v ⊥ v₁` maximizing `vᵀQᵀQv` (the inner maximization of the
/// discrete fairness objective). `v₁` is the empirical top right singular
/// vector.
pub fn second_right_singular_vector(q: &QMatrix) -> Result<Array1<f64>> {
    let s = q.svd()?;
    let d = q.q.ncols();
    if d < 2 {
        return Err(shape("need at least two sensitive groups"));
    }
    if s.singular_values.len() >= 2 {
        return Ok(s.right_vectors.column(1).to_owned());
    }
    // Fewer than two triplets (c = 1): Q has rank ≤ 1 and every unit vector
    // orthogonal to v₁ attains 0; return the first such vector from the
    // standard basis.
    let v1 = s.right_vectors.column(0).to_owned();
    let mut best: Option<Array1<f64>> = None;
    for k in 0..d {
        let mut cand = Array1::<f64>::zeros(d);
        cand[k] = 1.0;
        let proj = v1.dot(&cand);
        cand.scaled_add(-proj, &v1);
        let nrm = cand.dot(&cand).sqrt();
        if nrm > 1e-8 {
            best = Some(cand / nrm);
            break;
        }
    }
    let mut v = best.ok_or_else(|| invalid("no direction orthogonal to v1"))?;
    if svd::sign_flip_needed(v.as_slice().unwrap_or(&[])) {
        v.mapv_inplace(|x| -x);
    }
    Ok(v)
}
