//! Materialize the data an experiment config points at.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use renyi_core::data::{
    clustering_view, data_root, load_dataset, synth_eo, synth_yequalss, synth_zero_linear_corr, DatasetSpec,
    ZeroCorrDesign,
};
use renyi_core::faircluster::{counterexample, toy_dataset};
use renyi_core::{Batch, ClusterState};
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig, Source};

pub struct TrainData {
    pub train: Batch,
    pub test: Batch,
    pub content_hash: String,
}

pub struct ClusterData {
    pub points: Array2<f64>,
    pub sensitive: Vec<usize>,
    /// Fixed starting state, when the source prescribes one.
    pub initial: Option<ClusterState>,
    /// Planted cluster per point, for synthetic sources.
    pub planted: Option<Vec<usize>>,
    pub content_hash: String,
}

fn synthetic_hash(source: &Source) -> String {
    let text = serde_json::to_string(source).expect("source serializes");
    hex(&Sha256::digest(text.as_bytes()))
}

/// `$RENYI_DATA_DIR`, else the configured `data_dir`, else `../data` next to
/// the spec file.
fn spec_and_root(cfg: &ExperimentConfig, path: &Path, data_dir: &Option<PathBuf>) -> Result<(DatasetSpec, PathBuf)> {
    let spec_path = cfg.resolve(path);
    let spec = DatasetSpec::from_file(&spec_path)?;
    let fallback = match data_dir {
        Some(d) => cfg.resolve(d),
        None => spec_path.parent().unwrap_or(Path::new(".")).join("..").join("data"),
    };
    Ok((spec, data_root(&fallback)))
}

/// Train and test batches. Synthetic sources draw the test split with seed
/// `seed + 1`.
pub fn train_data(cfg: &ExperimentConfig) -> Result<TrainData> {
    let source = &cfg.source;
    let pair = |f: &dyn Fn(u64) -> renyi_core::Result<Batch>, seed: u64| -> Result<TrainData> {
        Ok(TrainData {
            train: f(seed)?,
            test: f(seed.wrapping_add(1))?,
            content_hash: synthetic_hash(source),
        })
    };
    match source {
        Source::Spec { path, sensitive, data_dir } => {
            let (spec, root) = spec_and_root(cfg, path, data_dir)?;
            let mut ds = load_dataset(&spec, &root).with_context(|| format!("loading dataset `{}`", spec.name))?;
            if !sensitive.is_empty() {
                ds = ds.with_active_sensitive(sensitive)?;
            }
            Ok(TrainData {
                train: ds.train,
                test: ds.test,
                content_hash: ds.content_hash,
            })
        }
        Source::Yequalss { n, seed } => pair(&|s| synth_yequalss(*n, s), *seed),
        Source::ZeroCorr { n, seed } => pair(&|s| synth_zero_linear_corr(*n, s, &ZeroCorrDesign::default()), *seed),
        Source::SynthEo { n, seed } => pair(&|s| synth_eo(*n, s), *seed),
        Source::Toy { .. } | Source::Counterexample => bail!("source `{}` is for clustering only", kind(source)),
    }
}

pub fn cluster_data(cfg: &ExperimentConfig) -> Result<ClusterData> {
    let source = &cfg.source;
    match source {
        Source::Spec { path, data_dir, .. } => {
            let (spec, root) = spec_and_root(cfg, path, data_dir)?;
            let view = clustering_view(&spec, &root).with_context(|| format!("clustering view of `{}`", spec.name))?;
            let mut h = Sha256::new();
            h.update(toml::to_string(&spec).unwrap_or_default().as_bytes());
            for v in &view.points {
                h.update(v.to_le_bytes());
            }
            for s in &view.sensitive {
                h.update((*s as u64).to_le_bytes());
            }
            Ok(ClusterData {
                points: view.points,
                sensitive: view.sensitive,
                initial: None,
                planted: None,
                content_hash: hex(&h.finalize()),
            })
        }
        Source::Toy { seed } => {
            let toy = toy_dataset(*seed);
            Ok(ClusterData {
                points: toy.points,
                sensitive: toy.sensitive,
                initial: None,
                planted: Some(toy.planted),
                content_hash: synthetic_hash(source),
            })
        }
        Source::Counterexample => {
            let ce = counterexample();
            Ok(ClusterData {
                points: ce.points,
                sensitive: ce.sensitive,
                initial: Some(ce.state),
                planted: None,
                content_hash: synthetic_hash(source),
            })
        }
        _ => bail!("source `{}` is for training only", kind(source)),
    }
}

fn kind(source: &Source) -> &'static str {
    match source {
        Source::Spec { .. } => "spec",
        Source::Yequalss { .. } => "yequalss",
        Source::ZeroCorr { .. } => "zero_corr",
        Source::SynthEo { .. } => "synth_eo",
        Source::Toy { .. } => "toy",
        Source::Counterexample => "counterexample",
    }
}
