//! Rényi penalties and their gradients with respect to the soft outputs.
//!
//! Every function here returns the unscaled penalty and a *seed*: the N × c
//! matrix `∂penalty/∂Fₙᵢ`. Trainers scale the seed by λ and pull it back to θ
//! through [`crate::model::ProbJacobian`].

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{invalid, shape, Result};
use crate::maxcorr::{empirical_joint, empirical_q, second_right_singular_vector};

/// Inner maximization for a discrete sensitive attribute: the empirical `Q`
/// and its second right singular vector.
pub fn discrete_inner_max(
    probs: ArrayView2<'_, f64>,
    sensitive: &[usize],
    n_groups: usize,
    floor: f64,
) -> Result<(Array1<f64>, f64)> {
    let q = empirical_q(probs, sensitive, n_groups, floor)?;
    let svd = q.svd()?;
    let sigma2 = svd.singular_values.get(1).copied().unwrap_or(0.0);
    let v = second_right_singular_vector(&q)?;
    Ok((v, sigma2))
}

/// `‖Q_θ v‖²` at a fixed `v`, with its gradient through the soft estimators
/// of `Q`.
///
/// Writing `Jᵢⱼ = (1/N) Σ_{n∈Xⱼ} Fₙᵢ`, `Pᵢ = max(Σⱼ Jᵢⱼ, floor)` and
/// `pⱼ = max(|Xⱼ|/N, floor)`, the penalty is `Σᵢ aᵢ² / Pᵢ` with
/// `aᵢ = Σⱼ Jᵢⱼ vⱼ / √pⱼ`. Group sizes do not depend on θ.
pub fn fixed_v_penalty(
    probs: ArrayView2<'_, f64>,
    sensitive: &[usize],
    n_groups: usize,
    v: &Array1<f64>,
    floor: f64,
) -> Result<(f64, Array2<f64>)> {
    if v.len() != n_groups {
        return Err(shape(format!("v has {} entries for {n_groups} groups", v.len())));
    }
    let joint = empirical_joint(probs, sensitive, n_groups)?;
    let (n, c) = probs.dim();
    let mut sizes = vec![0.0; n_groups];
    for &s in sensitive {
        sizes[s] += 1.0;
    }
    let scaled_v: Vec<f64> = (0..n_groups)
        .map(|j| v[j] / (sizes[j] / n as f64).max(floor).sqrt())
        .collect();

    let raw_marg = joint.sum_axis(Axis(1));
    let marg = raw_marg.mapv(|p| p.max(floor));
    let a: Vec<f64> = (0..c)
        .map(|i| (0..n_groups).map(|j| joint[[i, j]] * scaled_v[j]).sum())
        .collect();
    let value: f64 = (0..c).map(|i| a[i] * a[i] / marg[i]).sum();

    let inv_n = 1.0 / n as f64;
    let lin: Vec<f64> = (0..c).map(|i| 2.0 * a[i] / marg[i]).collect();
    let quad: Vec<f64> = (0..c)
        .map(|i| {
            if raw_marg[i] >= floor {
                a[i] * a[i] / (marg[i] * marg[i])
            } else {
                0.0
            }
        })
        .collect();
    let mut seed = Array2::<f64>::zeros((n, c));
    for (mut row, &s) in seed.axis_iter_mut(Axis(0)).zip(sensitive) {
        let cn = scaled_v[s];
        for i in 0..c {
            row[i] = (lin[i] * cn - quad[i]) * inv_n;
        }
    }
    Ok((value, seed))
}

/// Closed-form maximizer of the binary inner problem:
/// `wᵢ = Σₙ s̃ₙ Fₙᵢ / (2 Σₙ Fₙᵢ)` with the denominator floored at `N·floor`.
pub fn inner_w_closed_form(probs: ArrayView2<'_, f64>, s_tilde: &[f64], floor: f64) -> Result<Vec<f64>> {
    let (n, c) = probs.dim();
    check_s_tilde(s_tilde, n)?;
    let mut num = vec![0.0; c];
    let mut den = vec![0.0; c];
    for (row, &s) in probs.axis_iter(Axis(0)).zip(s_tilde) {
        for i in 0..c {
            num[i] += s * row[i];
            den[i] += row[i];
        }
    }
    let den_floor = n as f64 * floor;
    Ok((0..c).map(|i| num[i] / (2.0 * den[i].max(den_floor))).collect())
}

/// The w-dependent part of the binary min-max objective,
/// `(1/N) Σₙ Σᵢ (−wᵢ² Fₙᵢ + wᵢ s̃ₙ Fₙᵢ)`, and its seed.
pub fn binary_objective_penalty(
    probs: ArrayView2<'_, f64>,
    s_tilde: &[f64],
    w: &[f64],
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = probs.dim();
    check_s_tilde(s_tilde, n)?;
    if w.len() != c {
        return Err(shape(format!("w has {} entries for {c} classes", w.len())));
    }
    let inv_n = 1.0 / n as f64;
    let mut seed = Array2::<f64>::zeros((n, c));
    let mut value = 0.0;
    for ((mut srow, prow), &s) in seed
        .axis_iter_mut(Axis(0))
        .zip(probs.axis_iter(Axis(0)))
        .zip(s_tilde)
    {
        for i in 0..c {
            let coef = -w[i] * w[i] + w[i] * s;
            srow[i] = coef * inv_n;
            value += coef * prow[i];
        }
    }
    Ok((value * inv_n, seed))
}

/// `∂/∂wᵢ` of the binary objective (without λ). Zero at the closed-form
/// maximizer when the floor is inactive.
pub fn binary_objective_w_gradient(probs: ArrayView2<'_, f64>, s_tilde: &[f64], w: &[f64]) -> Vec<f64> {
    let n = probs.nrows() as f64;
    (0..probs.ncols())
        .map(|i| {
            probs
                .column(i)
                .iter()
                .zip(s_tilde)
                .map(|(&f, &s)| -2.0 * w[i] * f + s * f)
                .sum::<f64>()
                / n
        })
        .collect()
}

/// `s̃ = 2s − 1` for a binary sensitive column.
pub fn s_tilde(sensitive: &[usize]) -> Result<Vec<f64>> {
    sensitive
        .iter()
        .map(|&s| match s {
            0 => Ok(-1.0),
            1 => Ok(1.0),
            other => Err(invalid(format!("binary sensitive value expected, got {other}"))),
        })
        .collect()
}

/// `(E[s̃] / 2)²`: the value the binary objective takes at its maximizer for
/// any predictor independent of S. Subtracting it makes the reported penalty
/// vanish on such predictors.
pub fn binary_offset(s_tilde: &[f64]) -> f64 {
    let mean = s_tilde.iter().sum::<f64>() / s_tilde.len().max(1) as f64;
    0.25 * mean * mean
}

fn check_s_tilde(s_tilde: &[f64], n: usize) -> Result<()> {
    if s_tilde.len() != n {
        return Err(shape(format!("{} s̃ values for {n} rows", s_tilde.len())));
    }
    if let Some(bad) = s_tilde.iter().find(|&&s| s != 1.0 && s != -1.0) {
        return Err(invalid(format!("s̃ entries must be ±1, got {bad}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn closed_form_w_hand_example() {
        let probs = array![[0.6, 0.4], [0.2, 0.8]];
        let w = inner_w_closed_form(probs.view(), &[1.0, -1.0], 1e-9).unwrap();
        assert_abs_diff_eq!(w[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], -1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_w_single_group_is_half() {
        let probs = array![[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.1, 0.1, 0.8]];
        let w = inner_w_closed_form(probs.view(), &[1.0; 3], 1e-9).unwrap();
        for wi in w {
            assert_abs_diff_eq!(wi, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn closed_form_w_balanced_symmetric_is_zero() {
        let probs = array![[0.7, 0.3], [0.7, 0.3], [0.1, 0.9], [0.1, 0.9]];
        let w = inner_w_closed_form(probs.view(), &[1.0, -1.0, 1.0, -1.0], 1e-9).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn closed_form_w_hard_labels_count_formula() {
        let yhat = [0usize, 1, 1, 0, 2, 2, 1, 0];
        let s = [1usize, 0, 1, 1, 0, 0, 1, 0];
        let probs = Array2::from_shape_fn((8, 3), |(n, i)| f64::from(u8::from(yhat[n] == i)));
        let st = s_tilde(&s).unwrap();
        let w = inner_w_closed_form(probs.view(), &st, 1e-9).unwrap();
        for (i, wi) in w.iter().enumerate() {
            let c1 = (0..8).filter(|&n| yhat[n] == i && s[n] == 1).count() as f64;
            let c0 = (0..8).filter(|&n| yhat[n] == i && s[n] == 0).count() as f64;
            assert_abs_diff_eq!(*wi, (c1 - c0) / (2.0 * (c1 + c0)), epsilon = 1e-15);
        }
    }

    #[test]
    fn s_tilde_rejects_non_binary() {
        assert!(s_tilde(&[0, 1, 2]).is_err());
        let probs = array![[0.5, 0.5]];
        assert!(inner_w_closed_form(probs.view(), &[0.5], 1e-9).is_err());
    }

    #[test]
    fn fixed_v_penalty_equals_norm_of_qv() {
        let probs = array![[0.7, 0.2, 0.1], [0.1, 0.6, 0.3], [0.3, 0.3, 0.4], [0.2, 0.1, 0.7], [0.5, 0.4, 0.1]];
        let s = [0, 1, 2, 1, 0];
        let q = empirical_q(probs.view(), &s, 3, 1e-6).unwrap();
        let v = array![0.3, -0.5, 0.81];
        let (value, _) = fixed_v_penalty(probs.view(), &s, 3, &v, 1e-6).unwrap();
        let qv = q.q.dot(&v);
        assert_abs_diff_eq!(value, qv.dot(&qv), epsilon = 1e-14);
    }

    #[test]
    fn inner_max_attains_sigma2_squared() {
        let probs = array![[0.7, 0.3], [0.2, 0.8], [0.9, 0.1], [0.4, 0.6], [0.35, 0.65], [0.6, 0.4]];
        let s = [0, 1, 0, 2, 2, 1];
        let (v, sigma2) = discrete_inner_max(probs.view(), &s, 3, 1e-6).unwrap();
        let (value, _) = fixed_v_penalty(probs.view(), &s, 3, &v, 1e-6).unwrap();
        assert_abs_diff_eq!(value, sigma2 * sigma2, epsilon = 1e-12);
    }
}
