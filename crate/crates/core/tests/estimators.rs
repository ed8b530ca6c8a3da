use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use renyi_core::maxcorr::{q_from_joint, renyi_binary, renyi_discrete, JointTable};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
fn sym_eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[[i, j]].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Second singular value of `Q` from the eigenvalues of `QᵀQ`, with `Q` built
/// here from the raw table.
fn oracle_sigma2(p: &Array2<f64>) -> f64 {
    let (c, d) = p.dim();
    let row: Vec<f64> = (0..c).map(|i| p.row(i).sum()).collect();
    let col: Vec<f64> = (0..d).map(|j| p.column(j).sum()).collect();
    let q = Array2::from_shape_fn((c, d), |(i, j)| p[[i, j]] / (row[i] * col[j]).sqrt());
    let ev = sym_eigenvalues(q.t().dot(&q));
    ev.get(1).copied().unwrap_or(0.0).max(0.0).sqrt()
}

fn random_joint(rng: &mut ChaCha8Rng, c: usize, d: usize) -> Array2<f64> {
    let mut p = Array2::from_shape_fn((c, d), |_| rng.random_range(0.01..1.0));
    let total = p.sum();
    p /= total;
    p
}

#[test]
fn binary_route_matches_svd_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let c = rng.random_range(2..=8);
        let joint = JointTable::new(random_joint(&mut rng, c, 2)).unwrap();
        let a = renyi_binary(&joint).unwrap().rho;
        let b = renyi_discrete(&joint).unwrap();
        assert!((a - b).abs() <= 1e-9, "c={c}: {a} vs {b}");
    }
}

#[test]
fn svd_route_matches_eigen_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let c = rng.random_range(2..=6);
        let d = rng.random_range(2..=6);
        let p = random_joint(&mut rng, c, d);
        let expected = oracle_sigma2(&p);
        let got = renyi_discrete(&JointTable::new(p).unwrap()).unwrap();
        assert!((got - expected).abs() <= 1e-9, "{c}x{d}: {got} vs {expected}");
    }
}

#[test]
fn product_joints_are_uncorrelated() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let (c, d) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let a = random_joint(&mut rng, c, 1).column(0).to_owned();
        let b = random_joint(&mut rng, 1, d).row(0).to_owned();
        let p = Array2::from_shape_fn((c, d), |(i, j)| a[i] * b[j]);
        assert!(renyi_discrete(&JointTable::new(p).unwrap()).unwrap() <= 1e-9);
    }
}

#[test]
fn bijective_support_is_fully_correlated() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let k = rng.random_range(2..=6);
        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mass = random_joint(&mut rng, k, 1);
        let mut p = Array2::zeros((k, k));
        for i in 0..k {
            p[[i, perm[i]]] = mass[[i, 0]];
        }
        let rho = renyi_discrete(&JointTable::new(p).unwrap()).unwrap();
        assert!((rho - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn top_triplet_is_the_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..200 {
        let (c, d) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let joint = JointTable::new(random_joint(&mut rng, c, d)).unwrap();
        let svd = q_from_joint(&joint).unwrap().svd().unwrap();
        assert!((svd.singular_values[0] - 1.0).abs() <= 1e-9);
        let expected: Array1<f64> = joint.col_marginal().mapv(f64::sqrt);
        let v1 = svd.right_vectors.column(0);
        let sign = v1.dot(&expected).signum();
        for j in 0..d {
            assert!((sign * v1[j] - expected[j]).abs() <= 1e-9);
        }
    }
}
