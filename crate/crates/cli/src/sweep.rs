//! λ × seed grids for training and clustering.
//!
//! Grid points run on a rayon pool and return in grid order; all files are
//! written afterwards by a single writer, so output bytes do not depend on
//! the degree of parallelism.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use renyi_core::faircluster::{fair_kmeans, fair_kmeans_from, fair_objective, kmeans_loss, ClusterStop};
use renyi_core::fairtrain::{predict_probs, soft_sigma2, StopReason};
use renyi_core::metrics::{cluster_fairness, nmi, REPORT_CSV_HEADER};
use renyi_core::model::hard_predictions;
use renyi_core::{train, Batch, ClusterRun, EvalReport, ModelParams, TrainTrace};
use serde::Serialize;

use crate::config::{ExperimentConfig, InitScheme};
use crate::sources::{cluster_data, train_data, ClusterData, TrainData};

/// Per-run options from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's output directory.
    pub out: Option<PathBuf>,
    /// Overrides the config's seed list.
    pub seeds: Option<Vec<u64>>,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub lambda: f64,
    pub seed: u64,
    pub eta: f64,
    pub iters: usize,
    pub stop: StopReason,
    pub loss: f64,
    pub penalty: f64,
    pub grad_norm: f64,
    pub train: EvalReport,
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRow {
    pub lambda: f64,
    pub seed: u64,
    pub stop: ClusterStop,
    pub sweeps: usize,
    pub kmeans_loss: f64,
    pub objective: f64,
    pub std_w: f64,
    pub min_w: f64,
    pub max_w: f64,
    pub mean_w: f64,
    /// Largest `|w_k − mean(w)|` over nonempty clusters.
    pub max_dev_w: f64,
    /// NMI between assignments and the sensitive attribute.
    pub nmi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub lambda: f64,
    pub seed: u64,
    pub message: String,
}

/// Rows in grid order (λ outer, seed inner) plus the runs that failed.
#[derive(Debug)]
pub struct SweepResult<R, D> {
    pub rows: Vec<R>,
    /// Full per-run detail, aligned with `rows`.
    pub details: Vec<D>,
    pub failures: Vec<RunFailure>,
    pub out_dir: PathBuf,
}

impl<R, D> SweepResult<R, D> {
    pub fn complete(&self) -> bool {
        self.failures.is_empty()
    }
}

pub type TrainSweep = SweepResult<TrainRow, TrainTrace>;
pub type ClusterSweep = SweepResult<ClusterRow, ClusterRun>;

fn grid(cfg: &ExperimentConfig, seeds: &[u64]) -> Vec<(usize, f64, u64)> {
    cfg.lambdas
        .iter()
        .enumerate()
        .flat_map(|(i, &l)| seeds.iter().map(move |&s| (i, l, s)))
        .collect()
}

fn run_name(index: usize, seed: u64) -> String {
    format!("lambda{index:02}_seed{seed}")
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().context("building worker pool")
}

fn effective_seeds(cfg: &ExperimentConfig, opts: &RunOptions) -> Vec<u64> {
    opts.seeds.clone().unwrap_or_else(|| cfg.seeds.clone())
}

fn effective_config(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    c.seeds = effective_seeds(cfg, opts);
    c.validate()?;
    Ok(c)
}

pub fn evaluate(params: &ModelParams, batch: &Batch, floor: f64) -> Result<EvalReport> {
    let probs = predict_probs(params, batch)?;
    let preds = hard_predictions(probs.view());
    let sigma2 = soft_sigma2(probs.view(), &batch.sensitive, batch.n_groups, floor)?;
    Ok(EvalReport::from_predictions(&preds, &batch.labels, &batch.sensitive, batch.n_groups, sigma2)?)
}

fn initial_params(cfg: &ExperimentConfig, data: &TrainData, seed: u64) -> Result<ModelParams> {
    let (p, c) = (data.train.n_features(), data.train.n_classes);
    let m = &cfg.model;
    Ok(match m.init {
        InitScheme::Zeros => ModelParams::zeros(m.arch, p, m.hidden, c)?,
        InitScheme::Glorot => ModelParams::init(m.arch, p, m.hidden, c, seed)?,
    })
}

fn train_one(cfg: &ExperimentConfig, data: &TrainData, lambda: f64, seed: u64) -> Result<(TrainRow, TrainTrace)> {
    let base = cfg.train.clone().ok_or_else(|| anyhow!("config has no [train] table"))?;
    let eta = cfg.eta_at(base.eta, lambda);
    let tc = renyi_core::TrainConfig {
        lambda,
        eta,
        seed,
        ..base
    };
    let init = initial_params(cfg, data, seed)?;
    let trace = train(&init, &data.train, &tc)?;
    let last = trace.last().ok_or_else(|| anyhow!("empty trace"))?;
    let row = TrainRow {
        lambda,
        seed,
        eta,
        iters: trace.records.len().saturating_sub(1),
        stop: trace.stop,
        loss: last.loss,
        penalty: last.penalty,
        grad_norm: last.grad_norm,
        train: evaluate(&trace.params, &data.train, tc.floor)?,
        test: evaluate(&trace.params, &data.test, tc.floor)?,
    };
    info!(
        "{}: lambda {lambda} seed {seed}: train acc {:.4}, test acc {:.4}, sigma2 {:.4}",
        cfg.name, row.train.accuracy, row.test.accuracy, row.train.sigma2
    );
    Ok((row, trace))
}

/// Run the training grid and write `sweep.csv`, `traces/`, `checkpoints/`
/// and `manifest.json`.
pub fn cmd_train(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<TrainSweep> {
    let cfg = effective_config(cfg, opts)?;
    if cfg.train.is_none() {
        bail!("config `{}` has no [train] table", cfg.name);
    }
    let data = train_data(&cfg)?;
    let points = grid(&cfg, &cfg.seeds);
    let results: Vec<Result<(TrainRow, TrainTrace)>> =
        pool(opts.jobs)?.install(|| points.par_iter().map(|&(_, l, s)| train_one(&cfg, &data, l, s)).collect());

    let out_dir = opts.out.clone().unwrap_or_else(|| cfg.output_path());
    let mut sweep = TrainSweep {
        rows: Vec::new(),
        details: Vec::new(),
        failures: Vec::new(),
        out_dir: out_dir.clone(),
    };
    let mut runs = Vec::new();
    fs::create_dir_all(out_dir.join("traces"))?;
    fs::create_dir_all(out_dir.join("checkpoints"))?;
    for (&(index, lambda, seed), result) in points.iter().zip(results) {
        let name = run_name(index, seed);
        match result {
            Ok((row, trace)) => {
                let trace_file = format!("traces/{name}.csv");
                let ckpt_file = format!("checkpoints/{name}.txt");
                write(&out_dir.join(&trace_file), &trace.to_csv())?;
                write(&out_dir.join(&ckpt_file), &trace.params.to_checkpoint_string())?;
                runs.push(RunEntry::ok(lambda, seed, vec![trace_file, ckpt_file]));
                sweep.rows.push(row);
                sweep.details.push(trace);
            }
            Err(e) => {
                warn!("{}: lambda {lambda} seed {seed} failed: {e:#}", cfg.name);
                runs.push(RunEntry::failed(lambda, seed, &e));
                sweep.failures.push(RunFailure {
                    lambda,
                    seed,
                    message: format!("{e:#}"),
                });
            }
        }
    }
    write(&out_dir.join("sweep.csv"), &train_csv(&sweep.rows))?;
    write_manifest(&out_dir, "train", &cfg, &data.content_hash, runs, sweep.complete())?;
    Ok(sweep)
}

pub const TRAIN_CSV_KEYS: &str = "lambda,seed,eta,iters,stop,loss,penalty,grad_norm";

fn prefixed(prefix: &str) -> String {
    REPORT_CSV_HEADER.split(',').map(|c| format!("{prefix}_{c}")).collect::<Vec<_>>().join(",")
}

pub fn train_csv(rows: &[TrainRow]) -> String {
    let mut out = format!("{TRAIN_CSV_KEYS},{},{}\n", prefixed("train"), prefixed("test"));
    for r in rows {
        let _ = writeln!(
            out,
            "{:?},{},{:?},{},{},{:?},{:?},{:?},{},{}",
            r.lambda,
            r.seed,
            r.eta,
            r.iters,
            stop_tag(r.stop),
            r.loss,
            r.penalty,
            r.grad_norm,
            r.train.csv_row(),
            r.test.csv_row()
        );
    }
    out
}

fn stop_tag(stop: StopReason) -> &'static str {
    match stop {
        StopReason::MaxIters => "max_iters",
        StopReason::GradTol => "grad_tol",
    }
}

fn cluster_one(cfg: &ExperimentConfig, data: &ClusterData, lambda: f64, seed: u64) -> Result<(ClusterRow, ClusterRun)> {
    let base = cfg.cluster.clone().ok_or_else(|| anyhow!("config has no [cluster] table"))?;
    let cc = renyi_core::ClusterConfig { lambda, seed, ..base };
    let run = match &data.initial {
        Some(state) => {
            if state.k() != cc.k {
                bail!("source fixes K = {} but config asks for K = {}", state.k(), cc.k);
            }
            fair_kmeans_from(data.points.view(), &data.sensitive, &cc, state.clone())?
        }
        None => fair_kmeans(data.points.view(), &data.sensitive, &cc)?,
    };
    let stats = cluster_fairness(&run.state)?;
    let live: Vec<f64> = (0..run.state.k())
        .filter(|&k| run.state.counts[k] > 0)
        .map(|k| run.state.proportions[k])
        .collect();
    let max_dev_w = live.iter().map(|w| (w - stats.mean).abs()).fold(0.0, f64::max);
    let (kmeans, objective) = match run.sweeps.last() {
        Some(r) => (r.kmeans_loss, r.objective),
        None => (
            kmeans_loss(data.points.view(), &run.state),
            fair_objective(data.points.view(), &data.sensitive, &run.state, lambda),
        ),
    };
    let row = ClusterRow {
        lambda,
        seed,
        stop: run.stop,
        sweeps: run.sweeps.len(),
        kmeans_loss: kmeans,
        objective,
        std_w: stats.std,
        min_w: stats.min,
        max_w: stats.max,
        mean_w: stats.mean,
        max_dev_w,
        nmi: nmi(&run.state.assignments, &data.sensitive)?,
    };
    info!(
        "{}: lambda {lambda} seed {seed}: {:?} after {} sweeps, std(w) {:.4}, loss {:.2}",
        cfg.name, row.stop, row.sweeps, row.std_w, row.kmeans_loss
    );
    Ok((row, run))
}

/// Run the clustering grid and write `sweep.csv`, `proportions.csv`,
/// `traces/` and `manifest.json`.
pub fn cmd_cluster(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ClusterSweep> {
    let cfg = effective_config(cfg, opts)?;
    if cfg.cluster.is_none() {
        bail!("config `{}` has no [cluster] table", cfg.name);
    }
    let data = cluster_data(&cfg)?;
    let points = grid(&cfg, &cfg.seeds);
    let results: Vec<Result<(ClusterRow, ClusterRun)>> =
        pool(opts.jobs)?.install(|| points.par_iter().map(|&(_, l, s)| cluster_one(&cfg, &data, l, s)).collect());

    let out_dir = opts.out.clone().unwrap_or_else(|| cfg.output_path());
    let mut sweep = ClusterSweep {
        rows: Vec::new(),
        details: Vec::new(),
        failures: Vec::new(),
        out_dir: out_dir.clone(),
    };
    let mut runs = Vec::new();
    fs::create_dir_all(out_dir.join("traces"))?;
    for (&(index, lambda, seed), result) in points.iter().zip(results) {
        match result {
            Ok((row, run)) => {
                let trace_file = format!("traces/{}.csv", run_name(index, seed));
                write(&out_dir.join(&trace_file), &cluster_trace_csv(&run))?;
                runs.push(RunEntry::ok(lambda, seed, vec![trace_file]));
                sweep.rows.push(row);
                sweep.details.push(run);
            }
            Err(e) => {
                warn!("{}: lambda {lambda} seed {seed} failed: {e:#}", cfg.name);
                runs.push(RunEntry::failed(lambda, seed, &e));
                sweep.failures.push(RunFailure {
                    lambda,
                    seed,
                    message: format!("{e:#}"),
                });
            }
        }
    }
    write(&out_dir.join("sweep.csv"), &cluster_csv(&sweep.rows))?;
    write(&out_dir.join("proportions.csv"), &proportions_csv(&sweep.rows, &sweep.details, data.planted.as_deref()))?;
    write_manifest(&out_dir, "cluster", &cfg, &data.content_hash, runs, sweep.complete())?;
    Ok(sweep)
}

pub const CLUSTER_CSV_HEADER: &str = "lambda,seed,stop,sweeps,kmeans_loss,objective,std_w,min_w,max_w,mean_w,max_dev_w,nmi";

fn cluster_stop_tag(stop: ClusterStop) -> String {
    match stop {
        ClusterStop::Converged => "converged".into(),
        ClusterStop::Cycle { period } => format!("cycle{period}"),
        ClusterStop::MaxSweeps => "max_sweeps".into(),
    }
}

pub fn cluster_csv(rows: &[ClusterRow]) -> String {
    let mut out = format!("{CLUSTER_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:?},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.lambda,
            r.seed,
            cluster_stop_tag(r.stop),
            r.sweeps,
            r.kmeans_loss,
            r.objective,
            r.std_w,
            r.min_w,
            r.max_w,
            r.mean_w,
            r.max_dev_w,
            r.nmi
        );
    }
    out
}

fn cluster_trace_csv(run: &ClusterRun) -> String {
    let mut out = String::from("sweep,moved,kmeans_loss,objective,std_w,hash\n");
    let _ = writeln!(out, "0,0,,,,{}", run.initial_hash);
    for r in &run.sweeps {
        let _ = writeln!(out, "{},{},{:?},{:?},{:?},{}", r.sweep, r.moved, r.kmeans_loss, r.objective, r.std_w, r.hash);
    }
    out
}

/// One line per (run, cluster). With planted labels, `planted` names the
/// planted cluster contributing most points.
fn proportions_csv(rows: &[ClusterRow], runs: &[ClusterRun], planted: Option<&[usize]>) -> String {
    let mut out = String::from("lambda,seed,cluster,count,privileged,proportion,planted\n");
    for (row, run) in rows.iter().zip(runs) {
        let st = &run.state;
        for k in 0..st.k() {
            let major = planted
                .and_then(|p| dominant_planted(p, &st.assignments, k))
                .map(|c| c.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{:?},{},{},{},{},{:?},{}",
                row.lambda, row.seed, k, st.counts[k], st.privileged[k], st.proportions[k], major
            );
        }
    }
    out
}

/// Planted cluster with the most members in cluster `k`.
pub fn dominant_planted(planted: &[usize], assignments: &[usize], k: usize) -> Option<usize> {
    let n_planted = planted.iter().max()? + 1;
    let mut counts = vec![0usize; n_planted];
    for (&p, &a) in planted.iter().zip(assignments) {
        if a == k {
            counts[p] += 1;
        }
    }
    let (best, &c) = counts.iter().enumerate().max_by_key(|&(i, &c)| (c, std::cmp::Reverse(i)))?;
    (c > 0).then_some(best)
}

#[derive(Debug, Serialize)]
struct RunEntry {
    lambda: f64,
    seed: u64,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    files: Vec<String>,
}

impl RunEntry {
    fn ok(lambda: f64, seed: u64, files: Vec<String>) -> Self {
        Self {
            lambda,
            seed,
            status: "ok",
            error: None,
            files,
        }
    }

    fn failed(lambda: f64, seed: u64, e: &anyhow::Error) -> Self {
        Self {
            lambda,
            seed,
            status: "failed",
            error: Some(format!("{e:#}")),
            files: Vec::new(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    name: &'a str,
    version: &'a str,
    config_hash: String,
    dataset_hash: &'a str,
    config: &'a ExperimentConfig,
    complete: bool,
    runs: Vec<RunEntry>,
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    dataset_hash: &str,
    runs: Vec<RunEntry>,
    complete: bool,
) -> Result<()> {
    let manifest = Manifest {
        command,
        name: &cfg.name,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        dataset_hash,
        config: cfg,
        complete,
        runs,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write(&out_dir.join("manifest.json"), &text)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Fixed-width table of the headline columns.
pub fn train_summary(rows: &[TrainRow]) -> String {
    let mut out = format!(
        "{:>10} {:>5} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
        "lambda", "seed", "train_acc", "test_acc", "test_p%", "test_dp", "test_eo", "sigma2"
    );
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    for r in rows {
        let _ = writeln!(
            out,
            "{:>10} {:>5} {:>9.4} {:>9.4} {:>9} {:>9} {:>9} {:>9.4}",
            r.lambda,
            r.seed,
            r.train.accuracy,
            r.test.accuracy,
            f(r.test.p_percent),
            f(r.test.dp_violation),
            f(r.test.eo_violation),
            r.train.sigma2
        );
    }
    out
}

pub fn cluster_summary(rows: &[ClusterRow]) -> String {
    let mut out = format!(
        "{:>10} {:>5} {:>12} {:>6} {:>14} {:>8} {:>8}\n",
        "lambda", "seed", "stop", "sweeps", "kmeans_loss", "std_w", "nmi"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>10} {:>5} {:>12} {:>6} {:>14.3} {:>8.4} {:>8.4}",
            r.lambda,
            r.seed,
            cluster_stop_tag(r.stop),
            r.sweeps,
            r.kmeans_loss,
            r.std_w,
            r.nmi
        );
    }
    out
}
