//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Set `RENYI_ACCEPTANCE=1,5,9` to run a subset.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Result};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use renyi_cli::{cmd_cluster, cmd_train, dominant_planted, ClusterSweep, ExperimentConfig, RunOptions, TrainRow, TrainSweep};
use renyi_core::faircluster::{toy_dataset, ClusterStop, TOY_ALL_PRIVILEGED, TOY_NONE_PRIVILEGED};
use renyi_core::fairtrain::{
    binary_objective_penalty, discrete_inner_max, fixed_v_objective, fixed_v_penalty, fixed_w_objective,
    inner_w_closed_form, predict_probs, s_tilde,
};
use renyi_core::maxcorr::{q_from_joint, renyi_binary, renyi_discrete, JointTable};
use renyi_core::{Architecture, Batch, ModelParams};

const ADULT_UNREGULARIZED_P_PERCENT: f64 = 0.3149;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

struct Ctx {
    root: PathBuf,
    scratch: tempfile::TempDir,
    /// Every training row produced so far, for the NMI criterion.
    train_rows: Vec<(String, TrainRow)>,
}

impl Ctx {
    fn config(&self, name: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_file(&self.root.join("configs").join(format!("{name}.toml")))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.scratch.path().join(name)
    }

    fn train(&mut self, name: &str) -> Result<TrainSweep> {
        let opts = RunOptions {
            out: Some(self.out(name)),
            ..Default::default()
        };
        let sweep = cmd_train(&self.config(name)?, &opts)?;
        if !sweep.complete() {
            return Err(anyhow!("{name}: {} grid points failed: {:?}", sweep.failures.len(), sweep.failures));
        }
        self.train_rows.extend(sweep.rows.iter().map(|r| (name.to_string(), r.clone())));
        Ok(sweep)
    }

    fn cluster(&self, name: &str, out: &str) -> Result<ClusterSweep> {
        let opts = RunOptions {
            out: Some(self.out(out)),
            ..Default::default()
        };
        let sweep = cmd_cluster(&self.config(name)?, &opts)?;
        if !sweep.complete() {
            return Err(anyhow!("{name}: {} grid points failed", sweep.failures.len()));
        }
        Ok(sweep)
    }
}

// ---------------------------------------------------------------- oracles

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
fn sym_eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[[i, j]] * a[[i, j]];
                }
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]] == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (x, y) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * x - s * y;
                    a[[k, q]] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * x - s * y;
                    a[[q, k]] = s * x + c * y;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// `σ₂(Q)` via the eigenvalues of `QᵀQ`, with `Q` formed from the raw table.
fn oracle_sigma2(p: &Array2<f64>) -> f64 {
    let (c, d) = p.dim();
    let row: Vec<f64> = (0..c).map(|i| p.row(i).sum()).collect();
    let col: Vec<f64> = (0..d).map(|j| p.column(j).sum()).collect();
    let q = Array2::from_shape_fn((c, d), |(i, j)| p[[i, j]] / (row[i] * col[j]).sqrt());
    sym_eigenvalues(q.t().dot(&q)).get(1).copied().unwrap_or(0.0).max(0.0).sqrt()
}

fn random_joint(rng: &mut ChaCha8Rng, c: usize, d: usize) -> Array2<f64> {
    let p = Array2::from_shape_fn((c, d), |_| rng.random_range(0.01..1.0));
    let total = p.sum();
    p / total
}

fn small_instance(rng: &mut ChaCha8Rng, n_groups: usize) -> (ModelParams, Batch) {
    let n = rng.random_range(10..30);
    let p = rng.random_range(2..5);
    let c = rng.random_range(2..4);
    let (arch, h) = if rng.random_bool(0.5) {
        (Architecture::Linear, 0)
    } else {
        (Architecture::OneHidden, rng.random_range(2..5))
    };
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let labels = (0..n).map(|i| if i < c { i } else { rng.random_range(0..c) }).collect();
    let sensitive = (0..n).map(|i| if i < n_groups { i } else { rng.random_range(0..n_groups) }).collect();
    let batch = Batch::new(x, labels, sensitive, c, n_groups).unwrap();
    let params = ModelParams::init(arch, p, h, c, rng.random()).unwrap();
    let theta = params.theta().iter().map(|t| t + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    (params.with_theta(theta).unwrap(), batch)
}

fn fd_relative_error(params: &ModelParams, analytic: &[f64], f: impl Fn(&ModelParams) -> f64) -> f64 {
    let h = 1e-5;
    let theta = params.theta().to_vec();
    let numeric: Vec<f64> = (0..theta.len())
        .map(|k| {
            let (mut up, mut down) = (theta.clone(), theta.clone());
            up[k] += h;
            down[k] -= h;
            (f(&params.with_theta(up).unwrap()) - f(&params.with_theta(down).unwrap())) / (2.0 * h)
        })
        .collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(&numeric)).max(1e-12)
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let (a, b) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

// -------------------------------------------------------------- criteria

fn c1_estimator_equivalence(_: &mut Ctx) -> Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_routes: f64 = 0.0;
    for _ in 0..1000 {
        let c = rng.random_range(2..=8);
        let joint = JointTable::new(random_joint(&mut rng, c, 2))?;
        worst_routes = worst_routes.max((renyi_binary(&joint)?.rho - renyi_discrete(&joint)?).abs());
    }
    let mut worst_oracle: f64 = 0.0;
    for _ in 0..1000 {
        let (c, d) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let p = random_joint(&mut rng, c, d);
        let expected = oracle_sigma2(&p);
        worst_oracle = worst_oracle.max((renyi_discrete(&JointTable::new(p)?)? - expected).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_routes <= 1e-9 && worst_oracle <= 1e-9 && secs <= 30.0,
        format!("max |binary - discrete| = {worst_routes:.1e}, max |discrete - oracle| = {worst_oracle:.1e}, {secs:.2} s"),
    )
}

fn c2_independence(_: &mut Ctx) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut product: f64 = 0.0;
    let mut bijective: f64 = 0.0;
    let mut top_value: f64 = 0.0;
    let mut top_vector: f64 = 0.0;
    for _ in 0..500 {
        let (c, d) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let a = random_joint(&mut rng, c, 1);
        let b = random_joint(&mut rng, 1, d);
        let p = Array2::from_shape_fn((c, d), |(i, j)| a[[i, 0]] * b[[0, j]]);
        product = product.max(renyi_discrete(&JointTable::new(p)?)?);

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
        bijective = bijective.max((renyi_discrete(&JointTable::new(p)?)? - 1.0).abs());

        let joint = JointTable::new(random_joint(&mut rng, c, d))?;
        let svd = q_from_joint(&joint)?.svd()?;
        top_value = top_value.max((svd.singular_values[0] - 1.0).abs());
        let expected: Array1<f64> = joint.col_marginal().mapv(f64::sqrt);
        let v1 = svd.right_vectors.column(0);
        let sign = v1.dot(&expected).signum();
        for j in 0..d {
            top_vector = top_vector.max((sign * v1[j] - expected[j]).abs());
        }
    }
    outcome(
        product <= 1e-9 && bijective <= 1e-9 && top_value <= 1e-9 && top_vector <= 1e-9,
        format!(
            "product rho <= {product:.1e}, bijective |rho - 1| <= {bijective:.1e}, |sigma1 - 1| <= {top_value:.1e}, top vector error {top_vector:.1e}"
        ),
    )
}

fn c3_gradients(_: &mut Ctx) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut ce, mut fb, mut fv): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let instances = 25;
    for _ in 0..instances {
        let (params, batch) = small_instance(&mut rng, 2);
        let (_, g) = params.loss_and_grad(&batch)?;
        ce = ce.max(fd_relative_error(&params, &g, |m| m.loss_and_grad(&batch).unwrap().0));

        let w: Vec<f64> = (0..params.n_classes()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let (_, g) = fixed_w_objective(&params, &batch, &w)?;
        fb = fb.max(fd_relative_error(&params, &g, |m| fixed_w_objective(m, &batch, &w).unwrap().0));

        let d = rng.random_range(2..5);
        let (params, batch) = small_instance(&mut rng, d);
        let mut v = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
        v /= v.dot(&v).sqrt();
        let (_, g) = fixed_v_objective(&params, &batch, &v, 1e-6)?;
        fv = fv.max(fd_relative_error(&params, &g, |m| fixed_v_objective(m, &batch, &v, 1e-6).unwrap().0));
    }
    outcome(
        ce <= 1e-4 && fb <= 1e-4 && fv <= 1e-4,
        format!("{instances} instances each; max relative error: cross-entropy {ce:.1e}, f_B {fb:.1e}, fixed-v {fv:.1e}"),
    )
}

fn c4_inner_max(_: &mut Ctx) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut w_err: f64 = 0.0;
    let mut attain: f64 = 0.0;
    let mut beaten = 0usize;
    let mut tried = 0usize;
    for _ in 0..20 {
        let (params, batch) = small_instance(&mut rng, 2);
        let probs = predict_probs(&params, &batch)?;
        let st = s_tilde(&batch.sensitive)?;
        let w = inner_w_closed_form(probs.view(), &st, 1e-6)?;
        for i in 0..w.len() {
            let numeric = golden_max(
                |x| {
                    let mut t = w.clone();
                    t[i] = x;
                    binary_objective_penalty(probs.view(), &st, &t).unwrap().0
                },
                -2.0,
                2.0,
            );
            w_err = w_err.max((numeric - w[i]).abs());
        }

        let d = rng.random_range(2..5);
        let (params, batch) = small_instance(&mut rng, d);
        let probs = predict_probs(&params, &batch)?;
        let s = &batch.sensitive;
        let (v, sigma2) = discrete_inner_max(probs.view(), s, d, 1e-6)?;
        let (best, _) = fixed_v_penalty(probs.view(), s, d, &v, 1e-6)?;
        attain = attain.max((best - sigma2 * sigma2).abs());
        let n = s.len() as f64;
        let root_p = Array1::from_shape_fn(d, |j| (s.iter().filter(|&&g| g == j).count() as f64 / n).sqrt());
        for _ in 0..1000 {
            let mut u = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
            u = &u - &(&root_p * u.dot(&root_p));
            u /= u.dot(&u).sqrt();
            tried += 1;
            if fixed_v_penalty(probs.view(), s, d, &u, 1e-6)?.0 > best + 1e-12 {
                beaten += 1;
            }
        }
    }
    outcome(
        w_err <= 1e-6 && attain <= 1e-9 && beaten == 0,
        format!("closed-form w vs numeric max {w_err:.1e}; |‖Qv‖² - σ₂²| <= {attain:.1e}; {beaten}/{tried} random directions do better"),
    )
}

fn c5_fairness_accuracy_limit(ctx: &mut Ctx) -> Result<Outcome> {
    let start = Instant::now();
    let sweep = ctx.train("yequalss_dp")?;
    let secs = start.elapsed().as_secs_f64();
    let at = |l: f64| sweep.rows.iter().find(|r| r.lambda == l).ok_or_else(|| anyhow!("no row for lambda {l}"));
    let (r0, r100) = (at(0.0)?, at(100.0)?);
    let prior = 0.5;
    let dp = r100.train.dp_violation.unwrap_or(f64::INFINITY);
    outcome(
        r0.train.accuracy >= 0.99
            && r0.train.sigma2 >= 0.95
            && dp <= 0.05
            && (r100.train.accuracy - prior).abs() <= 0.03
            && secs <= 60.0,
        format!(
            "lambda 0: acc {:.4}, sigma2 {:.4}; lambda 100: DP {dp:.4}, acc {:.4} (prior {prior}); sweep {secs:.1} s",
            r0.train.accuracy, r0.train.sigma2, r100.train.accuracy
        ),
    )
}

fn c6_adult_dp(ctx: &mut Ctx) -> Result<Outcome> {
    let sweep = ctx.train("adult_dp")?;
    let base = sweep.rows.iter().find(|r| r.lambda == 0.0).ok_or_else(|| anyhow!("no lambda 0 row"))?;
    let p0 = base.test.p_percent.unwrap_or(f64::NAN);
    let best = sweep
        .rows
        .iter()
        .filter(|r| r.test.p_percent.unwrap_or(0.0) >= 0.8 && base.test.accuracy - r.test.accuracy <= 0.04)
        .min_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let detail = match best {
        Some(r) => format!(
            "lambda 0: test p% {p0:.4} (target {ADULT_UNREGULARIZED_P_PERCENT}), acc {:.4}; lambda {}: p% {:.4}, acc {:.4}",
            base.test.accuracy,
            r.lambda,
            r.test.p_percent.unwrap_or(f64::NAN),
            r.test.accuracy
        ),
        None => format!("lambda 0: test p% {p0:.4}; no grid point reaches p% >= 0.8 within 0.04 accuracy"),
    };
    outcome((p0 - ADULT_UNREGULARIZED_P_PERCENT).abs() <= 0.10 && best.is_some(), detail)
}

fn c7_baseline_saturation(ctx: &mut Ctx) -> Result<Outcome> {
    let renyi = ctx.train("zero_corr_dp_discrete")?;
    let pearson = ctx.train("zero_corr_pearson")?;
    let hsic = ctx.train("zero_corr_hsic")?;
    let dp = |r: &TrainRow| r.train.dp_violation.unwrap_or(f64::NAN);
    let renyi_best = renyi.rows.iter().map(dp).fold(f64::INFINITY, f64::min);
    let pearson_min = pearson.rows.iter().map(dp).fold(f64::INFINITY, f64::min);
    let hsic_min = hsic.rows.iter().map(dp).fold(f64::INFINITY, f64::min);
    outcome(
        renyi_best <= 0.05 && pearson_min >= 0.2 && hsic_min >= 0.2,
        format!("min DP over grid: Rényi {renyi_best:.4}, Pearson {pearson_min:.4}, linear HSIC {hsic_min:.4}"),
    )
}

fn c8_equalized_odds(ctx: &mut Ctx) -> Result<Outcome> {
    let sweep = ctx.train("adult_eo")?;
    let base = sweep.rows.iter().find(|r| r.lambda == 0.0).ok_or_else(|| anyhow!("no lambda 0 row"))?;
    let last = sweep.rows.last().ok_or_else(|| anyhow!("empty sweep"))?;
    let train_eo = last.train.eo_violation.unwrap_or(f64::NAN);
    let test_eo = last.test.eo_violation.unwrap_or(f64::NAN);
    let error_increase = base.test.accuracy - last.test.accuracy;
    outcome(
        last.lambda >= 1000.0 && test_eo <= 0.02 && error_increase <= 0.03,
        format!(
            "lambda 0: EO train {:.4} / test {:.4}; lambda {}: EO train {train_eo:.4} / test {test_eo:.4}, test error change {error_increase:+.4}",
            base.train.eo_violation.unwrap_or(f64::NAN),
            base.test.eo_violation.unwrap_or(f64::NAN),
            last.lambda
        ),
    )
}

fn inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-12)).count()
}

fn c9_fair_kmeans(ctx: &mut Ctx) -> Result<Outcome> {
    let sweep = ctx.cluster("adult_kmeans", "adult_kmeans")?;
    let std: Vec<f64> = sweep.rows.iter().map(|r| r.std_w).collect();
    let first = sweep.rows.first().ok_or_else(|| anyhow!("empty sweep"))?;
    let last = sweep.rows.last().ok_or_else(|| anyhow!("empty sweep"))?;
    let inv = inversions(&std);
    outcome(
        inv <= 1 && last.lambda >= 1.0 && last.std_w <= 0.01 && last.kmeans_loss > first.kmeans_loss,
        format!(
            "std(w) {:.4} -> {:.4} over {} grid points ({inv} inversions); lambda {}: std(w) {:.4}, loss {:.1} vs {:.1} at lambda 0",
            first.std_w,
            last.std_w,
            std.len(),
            last.lambda,
            last.std_w,
            last.kmeans_loss,
            first.kmeans_loss
        ),
    )
}

fn c10_counterexample(ctx: &mut Ctx) -> Result<Outcome> {
    let point = ctx.cluster("counterexample_per_point", "ce_point")?;
    let sweep = ctx.cluster("counterexample_per_sweep", "ce_sweep")?;
    let pp = &point.details[0];
    let ps = &sweep.details[0];
    let hashes = ps.hashes();
    let alternates = hashes.len() >= 3
        && hashes.windows(2).all(|w| w[0] != w[1])
        && hashes.windows(3).all(|w| w[0] == w[2]);
    let pass = pp.stop == ClusterStop::Converged
        && pp.sweeps.len() <= 10
        && ps.stop == ClusterStop::Cycle { period: 2 }
        && alternates;
    outcome(
        pass,
        format!(
            "per_point: {:?} after {} sweeps; per_sweep: {:?}, hashes {}",
            pp.stop,
            pp.sweeps.len(),
            ps.stop,
            hashes.iter().map(|h| &h[..8]).collect::<Vec<_>>().join(" -> ")
        ),
    )
}

fn c11_toy(ctx: &mut Ctx) -> Result<Outcome> {
    let sweep = ctx.cluster("toy_kmeans", "toy_kmeans")?;
    let planted = toy_dataset(0).planted;
    let base = &sweep.details[0];
    let w_of = |target: usize| {
        (0..base.state.k())
            .find(|&k| dominant_planted(&planted, &base.state.assignments, k) == Some(target))
            .map(|k| base.state.proportions[k])
    };
    let (w_all, w_none) = (w_of(TOY_ALL_PRIVILEGED), w_of(TOY_NONE_PRIVILEGED));
    let last = sweep.rows.last().ok_or_else(|| anyhow!("empty sweep"))?;
    outcome(
        sweep.rows[0].lambda == 0.0 && w_all == Some(1.0) && w_none == Some(0.0) && last.max_dev_w <= 0.1,
        format!(
            "lambda 0: one-sided clusters at w = {w_all:?} / {w_none:?}; lambda {}: max |w - mean| = {:.4}",
            last.lambda, last.max_dev_w
        ),
    )
}

fn c12_nmi(ctx: &mut Ctx) -> Result<Outcome> {
    let fair: Vec<&(String, TrainRow)> = ctx.train_rows.iter().filter(|(_, r)| r.train.sigma2 <= 0.05).collect();
    let worst = fair
        .iter()
        .max_by(|a, b| a.1.train.nmi.total_cmp(&b.1.train.nmi))
        .map(|(n, r)| (n.clone(), r.lambda, r.train.nmi));
    let detail = match &worst {
        Some((name, lambda, nmi)) => format!(
            "{} of {} runs have sigma2 <= 0.05; largest NMI {nmi:.5} ({name}, lambda {lambda})",
            fair.len(),
            ctx.train_rows.len()
        ),
        None => format!("no run among {} has sigma2 <= 0.05", ctx.train_rows.len()),
    };
    outcome(!fair.is_empty() && fair.iter().all(|(_, r)| r.train.nmi <= 0.02), detail)
}

fn c13_determinism(ctx: &mut Ctx) -> Result<Outcome> {
    let mut checked = Vec::new();
    for (name, train) in [("yequalss_dp", true), ("adult_kmeans", false), ("toy_kmeans", false), ("counterexample_per_sweep", false)] {
        let cfg = ctx.config(name)?;
        let mut bytes = Vec::new();
        for (i, jobs) in [1usize, 2].into_iter().enumerate() {
            let out = ctx.out(&format!("repeat_{name}_{i}"));
            let opts = RunOptions {
                out: Some(out.clone()),
                jobs,
                ..Default::default()
            };
            if train {
                cmd_train(&cfg, &opts)?;
            } else {
                cmd_cluster(&cfg, &opts)?;
            }
            bytes.push(std::fs::read(out.join("sweep.csv"))?);
        }
        checked.push((name, bytes[0] == bytes[1] && !bytes[0].is_empty()));
    }
    let pass = checked.iter().all(|(_, ok)| *ok);
    outcome(
        pass,
        checked.iter().map(|(n, ok)| format!("{n}: {}", if *ok { "identical" } else { "DIFFERENT" })).collect::<Vec<_>>().join(", "),
    )
}

type Criterion = fn(&mut Ctx) -> Result<Outcome>;

fn main() -> ExitCode {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("..").join("..");
    let mut ctx = Ctx {
        root,
        scratch: tempfile::tempdir().expect("temporary directory"),
        train_rows: Vec::new(),
    };
    let criteria: [(&str, Criterion); 13] = [
        ("estimator equivalence", c1_estimator_equivalence),
        ("independence characterization", c2_independence),
        ("gradient correctness", c3_gradients),
        ("inner-max optimality", c4_inner_max),
        ("fairness-accuracy limit", c5_fairness_accuracy_limit),
        ("Adult demographic parity", c6_adult_dp),
        ("baseline saturation", c7_baseline_saturation),
        ("equalized odds", c8_equalized_odds),
        ("fair K-means", c9_fair_kmeans),
        ("counterexample reproduction", c10_counterexample),
        ("toy clustering demo", c11_toy),
        ("NMI tracking", c12_nmi),
        ("determinism", c13_determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("RENYI_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (title, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run(&mut ctx) {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {}: {title}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
