//! Dense SVD for the small matrices that show up in maximal-correlation work.
//!
//! One-sided (Hestenes) Jacobi: columns of the working copy are rotated
//! pairwise until all of them are mutually orthogonal. The accumulated
//! rotations are the right singular vectors and the column norms are the
//! singular values. For c×d tables with c, d ≤ 64 this converges in a handful
//! of sweeps and is fully deterministic.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{invalid, shape, Error, Result};

/// Largest supported dimension on either axis.
pub const MAX_DIM: usize = 64;
/// Sweep cap for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;
/// Default orthogonality tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Thin SVD `m = U · diag(σ) · Vᵀ` with `r = min(rows, cols)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// Descending, nonnegative.
    pub singular_values: Vec<f64>,
    /// rows × r, orthonormal columns.
    pub left_vectors: Array2<f64>,
    /// cols × r, orthonormal columns.
    pub right_vectors: Array2<f64>,
}

impl SvdResult {
    pub fn rank_cutoff(&self, rel: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .filter(|&&s| s > rel * top)
            .count()
    }

    /// `U · diag(σ) · Vᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let mut scaled = self.left_vectors.clone();
        for (mut col, &s) in scaled.axis_iter_mut(Axis(1)).zip(&self.singular_values) {
            col *= s;
        }
        scaled.dot(&self.right_vectors.t())
    }
}

/// Full thin SVD of a small dense matrix.
///
/// Output is deterministic: singular values descend, each right singular
/// vector has its largest-magnitude entry nonnegative (lowest index wins among
/// equal magnitudes), and groups of tied singular values are ordered by the
/// right vectors' entries, lexicographically descending.
pub fn svd_small(m: ArrayView2<'_, f64>, tol: f64) -> Result<SvdResult> {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Err(shape("SVD of an empty matrix"));
    }
    if rows > MAX_DIM || cols > MAX_DIM {
        return Err(shape(format!(
            "SVD limited to {MAX_DIM}x{MAX_DIM}, got {rows}x{cols}"
        )));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("SVD tolerance must be positive, got {tol}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid("SVD input contains non-finite entries"));
    }

    let (sigma, left, right) = if rows >= cols {
        let (s, u, v) = one_sided_jacobi(m.to_owned(), tol)?;
        (s, u, v)
    } else {
        // A = V' Σ U'ᵀ when Aᵀ = U' Σ V'ᵀ.
        let (s, u, v) = one_sided_jacobi(m.t().to_owned(), tol)?;
        (s, v, u)
    };

    Ok(canonicalize(sigma, left, right))
}

/// Jacobi on the columns of `a` (rows ≥ cols). Returns (σ, U, V) unsorted.
fn one_sided_jacobi(mut a: Array2<f64>, tol: f64) -> Result<(Vec<f64>, Array2<f64>, Array2<f64>)> {
    let (rows, cols) = a.dim();
    let mut v = Array2::<f64>::eye(cols);
    let tol = tol.max(4.0 * f64::EPSILON);
    let tiny = f64::MIN_POSITIVE.sqrt();

    let mut converged = false;
    let mut residual = 0.0_f64;
    for _ in 0..MAX_SWEEPS {
        residual = 0.0;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let (x, y) = (a[[i, p]], a[[i, q]]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if alpha < tiny || beta < tiny || gamma == 0.0 {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= tol {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if residual <= tol {
            converged = true;
            break;
        }
    }

    let norms: Vec<f64> = a
        .axis_iter(Axis(1))
        .map(|col| col.dot(&col).sqrt())
        .collect();
    if !converged {
        let largest = norms.iter().copied().fold(0.0, f64::max);
        let smallest = norms.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(Error::SvdNotConverged {
            sweeps: MAX_SWEEPS,
            residual,
            largest,
            smallest,
        });
    }

    let top = norms.iter().copied().fold(0.0, f64::max);
    let null_cut = top * (rows.max(cols) as f64) * f64::EPSILON;
    let mut u = Array2::<f64>::zeros((rows, cols));
    let mut deficient = Vec::new();
    for (k, &nrm) in norms.iter().enumerate() {
        if nrm > null_cut && nrm > 0.0 {
            let col = a.column(k).mapv(|x| x / nrm);
            u.column_mut(k).assign(&col);
        } else {
            deficient.push(k);
        }
    }
    complete_orthonormal(&mut u, &deficient);
    Ok((norms, u, v))
}

fn rotate(m: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let x = m[[i, p]];
        let y = m[[i, q]];
        m[[i, p]] = c * x - s * y;
        m[[i, q]] = s * x + c * y;
    }
}

/// Fill the listed columns with unit vectors orthogonal to every other column.
fn complete_orthonormal(u: &mut Array2<f64>, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let rows = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|k| !missing.contains(k)).collect();
    let mut basis = 0;
    for &k in missing {
        while basis < rows {
            let mut cand = ndarray::Array1::<f64>::zeros(rows);
            cand[basis] = 1.0;
            basis += 1;
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                for &j in &filled {
                    let proj = u.column(j).dot(&cand);
                    cand.scaled_add(-proj, &u.column(j));
                }
            }
            let nrm = cand.dot(&cand).sqrt();
            if nrm > 1e-8 {
                u.column_mut(k).assign(&(cand / nrm));
                filled.push(k);
                break;
            }
        }
    }
}

/// Sign-fix, sort descending, break ties deterministically.
fn canonicalize(sigma: Vec<f64>, mut left: Array2<f64>, mut right: Array2<f64>) -> SvdResult {
    let r = sigma.len();
    for k in 0..r {
        if sign_flip_needed(&right.column(k).to_vec()) {
            right.column_mut(k).mapv_inplace(|x| -x);
            left.column_mut(k).mapv_inplace(|x| -x);
        }
    }

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let top = order.first().map_or(0.0, |&k| sigma[k]);
    let tie_tol = 1e-10 * top.max(f64::MIN_POSITIVE);
    let mut start = 0;
    while start < r {
        let mut end = start + 1;
        while end < r && sigma[order[end - 1]] - sigma[order[end]] <= tie_tol {
            end += 1;
        }
        order[start..end].sort_by(|&a, &b| lex_cmp(right.column(b), right.column(a)));
        start = end;
    }

    let singular_values = order.iter().map(|&k| sigma[k]).collect();
    let left_vectors = left.select(Axis(1), &order);
    let right_vectors = right.select(Axis(1), &order);
    SvdResult {
        singular_values,
        left_vectors,
        right_vectors,
    }
}

/// True when the largest-magnitude entry (lowest index among near-equal
/// magnitudes) is negative.
pub(crate) fn sign_flip_needed(v: &[f64]) -> bool {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let cut = max - 1e-12 * max.max(1.0);
    v.iter().find(|x| x.abs() >= cut).is_some_and(|&x| x < 0.0)
}

fn lex_cmp(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        if (x - y).abs() > 1e-12 {
            return x.total_cmp(y);
        }
    }
    std::cmp::Ordering::Equal
}
