//! Experiment orchestration for Rényi-fair training and clustering:
//! λ-sweeps written as CSV with a JSON manifest, checkpoint evaluation and
//! the planted-cluster demo.

pub mod config;
pub mod sources;
pub mod sweep;

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use renyi_core::faircluster::{ClusterInit, TOY_ALL_PRIVILEGED, TOY_NONE_PRIVILEGED};
use renyi_core::{ClusterConfig, EvalReport, ModelParams};

pub use config::{default_grid, parse_seeds, ExperimentConfig, InitScheme, ModelSpec, Source};
pub use sweep::{
    cluster_csv, cluster_summary, cmd_cluster, cmd_train, dominant_planted, train_csv, train_summary, ClusterRow,
    ClusterSweep, RunFailure, RunOptions, SweepResult, TrainRow, TrainSweep,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Evaluate a checkpoint on one split of the config's data source.
pub fn cmd_eval(checkpoint: &Path, cfg: &ExperimentConfig, split: Split) -> Result<EvalReport> {
    let text = std::fs::read_to_string(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let params = ModelParams::from_checkpoint_str(&text)?;
    let data = sources::train_data(cfg)?;
    let batch = match split {
        Split::Train => &data.train,
        Split::Test => &data.test,
    };
    if params.input_dim() != batch.n_features() {
        bail!(
            "checkpoint expects {} features, dataset has {}",
            params.input_dim(),
            batch.n_features()
        );
    }
    let floor = cfg.train.as_ref().map_or(renyi_core::maxcorr::DEFAULT_FLOOR, |t| t.floor);
    sweep::evaluate(&params, batch, floor)
}

/// Config for the planted five-cluster demo: k-means++ with K = 5.
pub fn toy_config(seed: u64, lambdas: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        name: "demo_toy".into(),
        source: Source::Toy { seed },
        model: ModelSpec::default(),
        train: None,
        cluster: Some(ClusterConfig {
            k: 5,
            init: ClusterInit::KMeansPlusPlus,
            ..Default::default()
        }),
        lambdas,
        seeds: vec![seed],
        eta_lambda_scale: 0.0,
        output_dir: None,
        base_dir: ".".into(),
    }
}

/// Proportion table of a demo sweep, one block per λ, naming the planted
/// cluster behind each found cluster and flagging the one-sided ones.
pub fn toy_table(sweep: &ClusterSweep, planted: &[usize]) -> String {
    let mut out = String::new();
    for (row, run) in sweep.rows.iter().zip(&sweep.details) {
        let _ = writeln!(out, "lambda = {}  (std(w) = {:.4}, max |w - mean| = {:.4})", row.lambda, row.std_w, row.max_dev_w);
        let _ = writeln!(out, "  {:>7} {:>7} {:>6} {:>10}", "cluster", "planted", "size", "w");
        for k in 0..run.state.k() {
            let p = dominant_planted(planted, &run.state.assignments, k);
            let note = match p {
                Some(TOY_ALL_PRIVILEGED) => "  all privileged",
                Some(TOY_NONE_PRIVILEGED) => "  none privileged",
                _ => "",
            };
            let label = p.map_or_else(|| "-".to_string(), |c| (c + 1).to_string());
            let _ = writeln!(
                out,
                "  {:>7} {:>7} {:>6} {:>10.4}{note}",
                k + 1,
                label,
                run.state.counts[k],
                run.state.proportions[k]
            );
        }
    }
    out
}
