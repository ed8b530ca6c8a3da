//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use renyi_core::{Architecture, ClusterConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// `{0} ∪ {10⁻³, …, 10³}`.
pub fn default_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend((-3..=3).map(|e| 10f64.powi(e)));
    grid
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Where the data of an experiment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// A dataset spec file. For clustering its `[clustering]` view is used.
    Spec {
        path: PathBuf,
        /// Sensitive attributes to combine; empty keeps the spec default.
        #[serde(default)]
        sensitive: Vec<String>,
        /// Raw data directory; `$RENYI_DATA_DIR` overrides it.
        #[serde(default)]
        data_dir: Option<PathBuf>,
    },
    /// Two blobs, label equals sensitive attribute.
    Yequalss { n: usize, seed: u64 },
    /// Three groups with zero linear label/group correlation.
    ZeroCorr { n: usize, seed: u64 },
    /// Binary S shifting the informative feature inside each label.
    SynthEo { n: usize, seed: u64 },
    /// Five planted clusters, two of them one-sided.
    Toy { seed: u64 },
    /// The four-point oscillation instance with its fixed initial state.
    Counterexample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    #[default]
    Zeros,
    /// Glorot-uniform, seeded by the run seed.
    Glorot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub hidden: usize,
    pub init: InitScheme,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            arch: Architecture::Linear,
            hidden: 0,
            init: InitScheme::Zeros,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub source: Source,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub cluster: Option<ClusterConfig>,
    #[serde(default = "default_grid")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Step size at grid point λ is `train.eta / (1 + eta_lambda_scale · λ)`.
    #[serde(default)]
    pub eta_lambda_scale: f64,
    /// Relative to the config file.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_toml(&text, &base).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            bail!("lambda grid is empty");
        }
        if let Some(bad) = self.lambdas.iter().find(|l| !l.is_finite() || **l < 0.0) {
            bail!("lambda grid entry {bad} is not a finite nonnegative number");
        }
        if self.lambdas.windows(2).any(|w| w[0] >= w[1]) {
            bail!("lambda grid must be strictly ascending");
        }
        if self.seeds.is_empty() {
            bail!("seed list is empty");
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            bail!("seed list has duplicates");
        }
        if !self.eta_lambda_scale.is_finite() || self.eta_lambda_scale < 0.0 {
            bail!("eta_lambda_scale must be finite and nonnegative");
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        if let Some(c) = &self.cluster {
            c.validate()?;
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        match &self.output_dir {
            Some(p) => self.resolve(p),
            None => self.base_dir.join("runs").join(&self.name),
        }
    }

    /// Step size used at grid point `lambda`.
    pub fn eta_at(&self, base: f64, lambda: f64) -> f64 {
        base / (1.0 + self.eta_lambda_scale * lambda)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse `"0,1,2"` into a seed list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`")))
        .collect()
}
