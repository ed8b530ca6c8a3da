//! K-means with a penalty that pushes each cluster's share of the privileged
//! group toward the global share.
//!
//! Each point `n` goes to `argmin_k ‖xₙ − cₖ‖² − λ(wₖ − sₙ)²`, where `wₖ` is
//! the privileged proportion of cluster `k`. In per-point mode `w` is
//! refreshed after every reassignment; in per-sweep mode it is frozen for the
//! whole pass over the data. Centers are recomputed after each pass.

mod toy;

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, shape, Error, Result};
use crate::metrics::proportion_stats;

pub use toy::{
    counterexample, toy_dataset, Counterexample, ToyData, TOY_ALL_PRIVILEGED, TOY_CLUSTERS, TOY_NONE_PRIVILEGED,
    TOY_POINTS_PER_CLUSTER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WUpdate {
    #[default]
    PerPoint,
    PerSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyPolicy {
    /// An emptied cluster keeps its last center and takes the global
    /// privileged proportion as its `w`.
    #[default]
    GlobalProportion,
    /// The last member of a cluster is never moved out.
    ForbidEmpty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterInit {
    /// Uniform random assignment, centers at the cluster means.
    #[default]
    RandomAssignment,
    /// k-means++ seeding, points assigned to the nearest seed.
    KMeansPlusPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
    pub lambda: f64,
    pub max_sweeps: usize,
    pub seed: u64,
    pub w_update: WUpdate,
    pub empty_policy: EmptyPolicy,
    pub init: ClusterInit,
    /// In per-point mode, score the point's current cluster with the point
    /// itself left out of its proportion.
    pub exclude_self: bool,
    /// Stop when the assignment at the end of a sweep repeats an earlier one.
    pub detect_cycles: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: 2,
            lambda: 0.0,
            max_sweeps: 200,
            seed: 0,
            w_update: WUpdate::PerPoint,
            empty_policy: EmptyPolicy::GlobalProportion,
            init: ClusterInit::RandomAssignment,
            exclude_self: true,
            detect_cycles: true,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("K must be at least 1"));
        }
        if self.max_sweeps == 0 {
            return Err(invalid("max_sweeps must be at least 1"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Assignments (0-based cluster indices), centers and proportion counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub assignments: Vec<usize>,
    /// K × p.
    pub centers: Array2<f64>,
    /// Privileged proportion per cluster (global proportion when empty).
    pub proportions: Vec<f64>,
    pub counts: Vec<usize>,
    pub privileged: Vec<usize>,
    pub global_proportion: f64,
}

impl ClusterState {
    /// Build counts and proportions from assignments.
    pub fn from_assignments(assignments: Vec<usize>, centers: Array2<f64>, sensitive: &[usize]) -> Result<Self> {
        let k = centers.nrows();
        if assignments.len() != sensitive.len() {
            return Err(shape(format!("{} assignments for {} points", assignments.len(), sensitive.len())));
        }
        check_binary(sensitive)?;
        let mut counts = vec![0usize; k];
        let mut privileged = vec![0usize; k];
        for (&a, &s) in assignments.iter().zip(sensitive) {
            if a >= k {
                return Err(invalid(format!("assignment {a} outside 0..{k}")));
            }
            counts[a] += 1;
            privileged[a] += s;
        }
        let global_proportion = sensitive.iter().sum::<usize>() as f64 / sensitive.len().max(1) as f64;
        let mut state = Self {
            assignments,
            centers,
            proportions: vec![0.0; k],
            counts,
            privileged,
            global_proportion,
        };
        for c in 0..k {
            state.refresh_proportion(c);
        }
        Ok(state)
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    fn refresh_proportion(&mut self, c: usize) {
        self.proportions[c] = if self.counts[c] > 0 {
            self.privileged[c] as f64 / self.counts[c] as f64
        } else {
            self.global_proportion
        };
    }

    /// Recompute every center as the mean of its points; empty clusters keep
    /// their center.
    pub fn update_centers(&mut self, points: ArrayView2<'_, f64>) {
        let mut sums = Array2::<f64>::zeros(self.centers.dim());
        for (row, &a) in points.axis_iter(Axis(0)).zip(&self.assignments) {
            let mut s = sums.row_mut(a);
            s += &row;
        }
        for c in 0..self.k() {
            if self.counts[c] > 0 {
                let mean = &sums.row(c) / self.counts[c] as f64;
                self.centers.row_mut(c).assign(&mean);
            }
        }
    }

    /// Check counts and proportions against a recomputation from scratch.
    pub fn check_consistency(&self, sensitive: &[usize]) -> Result<()> {
        let fresh = Self::from_assignments(self.assignments.clone(), self.centers.clone(), sensitive)?;
        if fresh.counts != self.counts || fresh.privileged != self.privileged {
            return Err(Error::Inconsistent(format!(
                "counts {:?}/{:?} but assignments give {:?}/{:?}",
                self.counts, self.privileged, fresh.counts, fresh.privileged
            )));
        }
        for (c, (a, b)) in self.proportions.iter().zip(&fresh.proportions).enumerate() {
            if (a - b).abs() > 1e-12 {
                return Err(Error::Inconsistent(format!("proportion of cluster {c} is {a}, expected {b}")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the assignment vector (little-endian u64 per point), hex.
    pub fn assignment_hash(&self) -> String {
        assignment_hash(&self.assignments)
    }
}

pub fn assignment_hash(assignments: &[usize]) -> String {
    let mut h = Sha256::new();
    for &a in assignments {
        h.update((a as u64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn check_binary(sensitive: &[usize]) -> Result<()> {
    match sensitive.iter().find(|&&s| s > 1) {
        Some(s) => Err(invalid(format!("binary sensitive value expected, got {s}"))),
        None => Ok(()),
    }
}

/// Move point `n` (sensitive value `s`) from `from` to `to`, adjusting counts
/// and the two affected proportions in O(1).
pub fn update_proportions_incremental(state: &mut ClusterState, n: usize, s: usize, from: usize, to: usize) -> Result<()> {
    if state.assignments.get(n) != Some(&from) {
        return Err(Error::Inconsistent(format!("point {n} is not in cluster {from}")));
    }
    if from == to {
        return Ok(());
    }
    if state.counts[from] == 0 || state.privileged[from] < s {
        return Err(Error::Inconsistent(format!("count underflow in cluster {from}")));
    }
    state.counts[from] -= 1;
    state.privileged[from] -= s;
    state.counts[to] += 1;
    state.privileged[to] += s;
    state.assignments[n] = to;
    state.refresh_proportion(from);
    state.refresh_proportion(to);
    Ok(())
}

/// `argmin_k ‖x − cₖ‖² − λ(wₖ − s)²`, lowest index on ties.
pub fn assign_point(x: ArrayView1<'_, f64>, s: f64, centers: ArrayView2<'_, f64>, proportions: &[f64], lambda: f64) -> usize {
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (k, c) in centers.axis_iter(Axis(0)).enumerate() {
        let score = sq_dist(x, c) - lambda * (proportions[k] - s).powi(2);
        if score < best_score {
            best_score = score;
            best = k;
        }
    }
    best
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `Σₙ ‖xₙ − c_{aₙ}‖²`.
pub fn kmeans_loss(points: ArrayView2<'_, f64>, state: &ClusterState) -> f64 {
    points
        .axis_iter(Axis(0))
        .zip(&state.assignments)
        .map(|(x, &a)| sq_dist(x, state.centers.row(a)))
        .sum()
}

/// K-means loss minus `λ Σₙ (w_{aₙ} − sₙ)²` at the current proportions.
pub fn fair_objective(points: ArrayView2<'_, f64>, sensitive: &[usize], state: &ClusterState, lambda: f64) -> f64 {
    let pen: f64 = state
        .assignments
        .iter()
        .zip(sensitive)
        .map(|(&a, &s)| (state.proportions[a] - s as f64).powi(2))
        .sum();
    kmeans_loss(points, state) - lambda * pen
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    /// Points whose cluster changed during the sweep.
    pub moved: usize,
    pub kmeans_loss: f64,
    pub objective: f64,
    pub std_w: f64,
    pub hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClusterStop {
    /// A full sweep left every assignment unchanged.
    Converged,
    /// The assignment after a sweep repeats the one `period` sweeps earlier.
    Cycle { period: usize },
    MaxSweeps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRun {
    pub state: ClusterState,
    pub sweeps: Vec<SweepRecord>,
    pub stop: ClusterStop,
    /// Assignment hash of the initial state.
    pub initial_hash: String,
}

impl ClusterRun {
    /// Hashes of the initial assignment and of the assignment after each sweep.
    pub fn hashes(&self) -> Vec<&str> {
        std::iter::once(self.initial_hash.as_str())
            .chain(self.sweeps.iter().map(|r| r.hash.as_str()))
            .collect()
    }

    pub fn sweeps_csv(&self) -> String {
        let mut out = String::from("sweep,moved,kmeans_loss,objective,std_w\n");
        for r in &self.sweeps {
            out.push_str(&format!("{},{},{:?},{:?},{:?}\n", r.sweep, r.moved, r.kmeans_loss, r.objective, r.std_w));
        }
        out
    }
}

fn check_points(points: ArrayView2<'_, f64>, sensitive: &[usize], k: usize) -> Result<()> {
    let n = points.nrows();
    if n == 0 || points.ncols() == 0 {
        return Err(shape("empty input"));
    }
    if sensitive.len() != n {
        return Err(shape(format!("{} sensitive values for {n} points", sensitive.len())));
    }
    if k > n {
        return Err(invalid(format!("K = {k} exceeds N = {n}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite coordinate"));
    }
    check_binary(sensitive)
}

/// Seeded initial state per `cfg.init`.
pub fn initial_state(points: ArrayView2<'_, f64>, sensitive: &[usize], cfg: &ClusterConfig) -> Result<ClusterState> {
    cfg.validate()?;
    check_points(points, sensitive, cfg.k)?;
    let (n, p) = points.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.init {
        ClusterInit::RandomAssignment => {
            let assignments: Vec<usize> = (0..n).map(|_| rng.random_range(0..cfg.k)).collect();
            let mut centers = Array2::<f64>::zeros((cfg.k, p));
            // a cluster left empty by the draw starts at a random point
            for c in 0..cfg.k {
                let pick = rng.random_range(0..n);
                centers.row_mut(c).assign(&points.row(pick));
            }
            let mut state = ClusterState::from_assignments(assignments, centers, sensitive)?;
            state.update_centers(points);
            Ok(state)
        }
        ClusterInit::KMeansPlusPlus => {
            let centers = kmeans_plus_plus(points, cfg.k, &mut rng);
            let assignments: Vec<usize> = points
                .axis_iter(Axis(0))
                .map(|x| assign_point(x, 0.0, centers.view(), &vec![0.0; cfg.k], 0.0))
                .collect();
            ClusterState::from_assignments(assignments, centers, sensitive)
        }
    }
}

fn kmeans_plus_plus(points: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (n, p) = points.dim();
    let mut centers = Array2::<f64>::zeros((k, p));
    centers.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut d2: Array1<f64> = points.axis_iter(Axis(0)).map(|x| sq_dist(x, centers.row(0))).collect();
    for c in 1..k {
        let total = d2.sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, x) in points.axis_iter(Axis(0)).enumerate() {
            d2[i] = d2[i].min(sq_dist(x, centers.row(c)));
        }
    }
    centers
}

/// Run fair K-means from a seeded initial state.
pub fn fair_kmeans(points: ArrayView2<'_, f64>, sensitive: &[usize], cfg: &ClusterConfig) -> Result<ClusterRun> {
    let state = initial_state(points, sensitive, cfg)?;
    fair_kmeans_from(points, sensitive, cfg, state)
}

/// Run fair K-means from a given state (assignments and centers).
pub fn fair_kmeans_from(
    points: ArrayView2<'_, f64>,
    sensitive: &[usize],
    cfg: &ClusterConfig,
    mut state: ClusterState,
) -> Result<ClusterRun> {
    cfg.validate()?;
    check_points(points, sensitive, state.k())?;
    if state.centers.ncols() != points.ncols() {
        return Err(shape(format!(
            "centers have {} columns, points have {}",
            state.centers.ncols(),
            points.ncols()
        )));
    }
    state.check_consistency(sensitive)?;
    let initial_hash = state.assignment_hash();
    let mut seen: HashMap<String, usize> = HashMap::from([(initial_hash.clone(), 0)]);
    let mut sweeps = Vec::new();
    let mut stop = ClusterStop::MaxSweeps;

    for sweep in 1..=cfg.max_sweeps {
        let moved = match cfg.w_update {
            WUpdate::PerPoint => per_point_sweep(points, sensitive, cfg, &mut state)?,
            WUpdate::PerSweep => per_sweep_pass(points, sensitive, cfg, &mut state)?,
        };
        state.update_centers(points);
        let hash = state.assignment_hash();
        let stats = proportion_stats(&state.proportions, &state.counts)?;
        sweeps.push(SweepRecord {
            sweep,
            moved,
            kmeans_loss: kmeans_loss(points, &state),
            objective: fair_objective(points, sensitive, &state, cfg.lambda),
            std_w: stats.std,
            hash: hash.clone(),
        });
        if moved == 0 {
            stop = ClusterStop::Converged;
            break;
        }
        if let Some(&earlier) = seen.get(&hash) {
            if cfg.detect_cycles {
                stop = ClusterStop::Cycle { period: sweep - earlier };
                break;
            }
        }
        seen.insert(hash, sweep);
    }
    Ok(ClusterRun {
        state,
        sweeps,
        stop,
        initial_hash,
    })
}

fn per_point_sweep(points: ArrayView2<'_, f64>, sensitive: &[usize], cfg: &ClusterConfig, state: &mut ClusterState) -> Result<usize> {
    let mut moved = 0;
    let mut scratch = state.proportions.clone();
    for (n, x) in points.axis_iter(Axis(0)).enumerate() {
        let s = sensitive[n];
        let from = state.assignments[n];
        if cfg.empty_policy == EmptyPolicy::ForbidEmpty && state.counts[from] == 1 {
            continue;
        }
        scratch.copy_from_slice(&state.proportions);
        if cfg.exclude_self {
            let rest = state.counts[from] - 1;
            scratch[from] = if rest > 0 {
                (state.privileged[from] - s) as f64 / rest as f64
            } else {
                state.global_proportion
            };
        }
        let to = assign_point(x, s as f64, state.centers.view(), &scratch, cfg.lambda);
        if to != from {
            update_proportions_incremental(state, n, s, from, to)?;
            moved += 1;
        }
    }
    Ok(moved)
}

fn per_sweep_pass(points: ArrayView2<'_, f64>, sensitive: &[usize], cfg: &ClusterConfig, state: &mut ClusterState) -> Result<usize> {
    let snapshot = state.proportions.clone();
    let mut moved = 0;
    for (n, x) in points.axis_iter(Axis(0)).enumerate() {
        let s = sensitive[n];
        let from = state.assignments[n];
        if cfg.empty_policy == EmptyPolicy::ForbidEmpty && state.counts[from] == 1 {
            continue;
        }
        let to = assign_point(x, s as f64, state.centers.view(), &snapshot, cfg.lambda);
        if to != from {
            // counts move now; the proportions used for scoring stay frozen
            update_proportions_incremental(state, n, s, from, to)?;
            moved += 1;
        }
    }
    Ok(moved)
}
