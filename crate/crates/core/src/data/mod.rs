//! Tabular dataset loading driven by declarative TOML spec files, plus
//! synthetic generators.
//!
//! Categorical columns are one-hot encoded with the train split's categories
//! and an extra bucket for tokens first seen at test time. Continuous columns
//! are z-scored with train statistics only.

mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::warn;
use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fairtrain::combine_sensitive;
use crate::model::Batch;

pub use synth::{synth_eo, synth_yequalss, synth_zero_linear_corr, ZeroCorrDesign, YEQUALSS_OFFSET};

/// Environment variable naming the directory that holds the raw data files.
pub const DATA_DIR_ENV: &str = "RENYI_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Rows containing the missing token are removed.
    #[default]
    DropRow,
    /// The missing token is kept as an ordinary category.
    Keep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSpec {
    pub column: String,
    /// Tokens mapped to class 1; everything else is class 0.
    pub positive: Vec<String>,
}

/// A discrete sensitive attribute read from one raw column. Group `j`
/// collects the tokens in `groups[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitiveSpec {
    pub name: String,
    pub column: String,
    pub groups: Vec<Vec<String>>,
    #[serde(default)]
    pub group_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    /// Separate train and test files.
    Files { train: String, test: String },
    /// The first `train_rows` rows train, the rest test.
    HeadTail { file: String, train_rows: usize },
    /// A seeded shuffle, then exactly `train_rows` and `test_rows`.
    Seeded {
        file: String,
        train_rows: usize,
        test_rows: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringSpec {
    pub features: Vec<String>,
    /// Name of a binary sensitive attribute.
    pub sensitive: String,
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default)]
    pub header: bool,
    /// Lines starting with this character are skipped.
    #[serde(default)]
    pub comment: Option<String>,
    #[serde(default)]
    pub missing_token: Option<String>,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
    /// Suffix stripped from every field (Adult's test labels end in `.`).
    #[serde(default)]
    pub strip_suffix: Option<String>,
    pub categorical: Vec<String>,
    #[serde(default)]
    pub drop: Vec<String>,
    pub label: LabelSpec,
    pub sensitive: Vec<SensitiveSpec>,
    /// Sensitive attributes combined into the batch's sensitive column
    /// (all of them when empty).
    #[serde(default)]
    pub active_sensitive: Vec<String>,
    /// Keep sensitive columns among the features.
    #[serde(default)]
    pub sensitive_in_features: bool,
    pub split: SplitSpec,
    #[serde(default)]
    pub clustering: Option<ClusteringSpec>,
}

fn default_delimiter() -> String {
    ",".into()
}

fn spec_err(msg: impl Into<String>) -> Error {
    Error::Spec(msg.into())
}

impl DatasetSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| spec_err(format!("unknown column `{name}`")))
    }

    pub fn validate(&self) -> Result<()> {
        let unique: BTreeSet<&String> = self.columns.iter().collect();
        if unique.len() != self.columns.len() {
            return Err(spec_err("duplicate column names"));
        }
        if self.delimiter.len() != 1 {
            return Err(spec_err("delimiter must be a single byte"));
        }
        self.col(&self.label.column)?;
        if self.sensitive.is_empty() {
            return Err(spec_err("at least one sensitive attribute is required"));
        }
        for s in &self.sensitive {
            self.col(&s.column)?;
            if s.groups.len() < 2 {
                return Err(spec_err(format!("sensitive `{}` needs at least two groups", s.name)));
            }
            if s.column == self.label.column {
                return Err(spec_err("sensitive column cannot be the label"));
            }
        }
        for name in self.categorical.iter().chain(&self.drop) {
            self.col(name)?;
        }
        for name in &self.active_sensitive {
            if !self.sensitive.iter().any(|s| &s.name == name) {
                return Err(spec_err(format!("unknown sensitive attribute `{name}`")));
            }
        }
        if let Some(c) = &self.clustering {
            for f in &c.features {
                self.col(f)?;
            }
            let s = self
                .sensitive
                .iter()
                .find(|s| s.name == c.sensitive)
                .ok_or_else(|| spec_err(format!("unknown clustering sensitive `{}`", c.sensitive)))?;
            if s.groups.len() != 2 {
                return Err(spec_err("clustering needs a binary sensitive attribute"));
            }
        }
        Ok(())
    }

    /// Column indices used as features, in file order.
    fn feature_columns(&self) -> Vec<usize> {
        let sens: BTreeSet<&str> = self.sensitive.iter().map(|s| s.column.as_str()).collect();
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                *c != &self.label.column
                    && !self.drop.contains(c)
                    && (self.sensitive_in_features || !sens.contains(c.as_str()))
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Where to find raw files: `$RENYI_DATA_DIR` if set, otherwise `fallback`.
pub fn data_root(fallback: &Path) -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| fallback.to_path_buf())
}

type Rows = Vec<Vec<String>>;

fn read_rows(spec: &DatasetSpec, path: &Path) -> Result<(Rows, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut builder = csv::ReaderBuilder::new();
    builder
        .delimiter(spec.delimiter.as_bytes()[0])
        .has_headers(spec.header)
        .flexible(true)
        .trim(csv::Trim::All);
    if let Some(c) = &spec.comment {
        builder.comment(c.bytes().next());
    }
    let mut rows = Vec::new();
    for (line, rec) in builder.from_reader(bytes.as_slice()).records().enumerate() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != spec.columns.len() {
            return Err(spec_err(format!(
                "{}: record {} has {} fields, expected {}",
                path.display(),
                line + 1,
                rec.len(),
                spec.columns.len()
            )));
        }
        let mut row: Vec<String> = rec.iter().map(str::to_string).collect();
        if let Some(suffix) = &spec.strip_suffix {
            for f in &mut row {
                if let Some(stripped) = f.strip_suffix(suffix.as_str()) {
                    *f = stripped.to_string();
                }
            }
        }
        rows.push(row);
    }
    Ok((rows, bytes))
}

fn drop_missing(spec: &DatasetSpec, rows: Rows) -> Rows {
    match (&spec.missing_token, spec.missing_policy) {
        (Some(tok), MissingPolicy::DropRow) => rows.into_iter().filter(|r| !r.iter().any(|f| f == tok)).collect(),
        _ => rows,
    }
}

/// Raw train and test rows per the split policy, plus a content hash of the
/// spec and source files.
fn split_rows(spec: &DatasetSpec, root: &Path) -> Result<(Rows, Rows, String)> {
    let mut hasher = Sha256::new();
    hasher.update(toml::to_string(spec).map_err(|e| spec_err(e.to_string()))?.as_bytes());
    let mut read = |rel: &str| -> Result<Rows> {
        let (rows, bytes) = read_rows(spec, &root.join(rel))?;
        hasher.update(&bytes);
        Ok(drop_missing(spec, rows))
    };
    let (train, test) = match &spec.split {
        SplitSpec::Files { train, test } => (read(train)?, read(test)?),
        SplitSpec::HeadTail { file, train_rows } => {
            let mut all = read(file)?;
            if *train_rows >= all.len() {
                return Err(spec_err(format!("train_rows {train_rows} leaves no test rows of {}", all.len())));
            }
            let test = all.split_off(*train_rows);
            (all, test)
        }
        SplitSpec::Seeded {
            file,
            train_rows,
            test_rows,
            seed,
        } => {
            let mut all = read(file)?;
            if train_rows + test_rows > all.len() {
                return Err(spec_err(format!(
                    "split needs {} rows, file has {}",
                    train_rows + test_rows,
                    all.len()
                )));
            }
            all.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            all.truncate(train_rows + test_rows);
            let test = all.split_off(*train_rows);
            (all, test)
        }
    };
    let hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok((train, test, hash))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureEncoding {
    /// z-scored numeric column.
    Continuous { column: String, mean: f64, std: f64 },
    /// One block of indicator columns, the last one for unseen tokens.
    OneHot { column: String, categories: Vec<String> },
}

impl FeatureEncoding {
    pub fn width(&self) -> usize {
        match self {
            Self::Continuous { .. } => 1,
            Self::OneHot { categories, .. } => categories.len() + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveColumn {
    pub name: String,
    pub alphabet: Vec<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub train: Batch,
    pub test: Batch,
    pub feature_names: Vec<String>,
    pub encodings: Vec<FeatureEncoding>,
    /// Every sensitive attribute, whether or not it is active.
    pub sensitive: Vec<SensitiveColumn>,
    /// Names of the attributes combined into the batches' sensitive column.
    pub active_sensitive: Vec<String>,
    /// SHA-256 over the spec and the raw source bytes.
    pub content_hash: String,
}

impl EncodedDataset {
    /// Rebuild the batches' sensitive column from the named attributes.
    pub fn with_active_sensitive(mut self, names: &[String]) -> Result<Self> {
        let cols: Vec<&SensitiveColumn> = names
            .iter()
            .map(|n| {
                self.sensitive
                    .iter()
                    .find(|s| &s.name == n)
                    .ok_or_else(|| spec_err(format!("unknown sensitive attribute `{n}`")))
            })
            .collect::<Result<_>>()?;
        if cols.is_empty() {
            return Err(spec_err("no sensitive attribute selected"));
        }
        let radices: Vec<usize> = cols.iter().map(|c| c.alphabet.len()).collect();
        let train = combine_sensitive(&cols.iter().map(|c| c.train.clone()).collect::<Vec<_>>(), &radices)?;
        let test = combine_sensitive(&cols.iter().map(|c| c.test.clone()).collect::<Vec<_>>(), &radices)?;
        let groups = train.alphabet_size();
        self.train.sensitive = train.values;
        self.train.n_groups = groups;
        self.test.sensitive = test.values;
        self.test.n_groups = groups;
        self.active_sensitive = names.to_vec();
        Ok(self)
    }

    /// The category token encoded in `row` for a one-hot column, `None` for
    /// the unseen bucket.
    pub fn decode_category(&self, features: &[f64], column: &str) -> Option<String> {
        let mut offset = 0;
        for enc in &self.encodings {
            if let FeatureEncoding::OneHot { column: c, categories } = enc {
                if c == column {
                    let block = &features[offset..offset + enc.width()];
                    let hot = block.iter().position(|&v| v == 1.0)?;
                    return categories.get(hot).cloned();
                }
            }
            offset += enc.width();
        }
        None
    }
}

fn parse_number(tok: &str, column: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| spec_err(format!("column `{column}`: `{tok}` is not a number")))
}

fn encode_sensitive(s: &SensitiveSpec, col: usize, rows: &Rows) -> Result<Vec<usize>> {
    rows.iter()
        .map(|r| {
            let tok = &r[col];
            s.groups
                .iter()
                .position(|g| g.iter().any(|t| t == tok))
                .ok_or_else(|| spec_err(format!("sensitive `{}`: token `{tok}` is in no group", s.name)))
        })
        .collect()
}

/// Parse, split and encode a dataset. Relative file paths resolve against
/// `root`.
pub fn load_dataset(spec: &DatasetSpec, root: &Path) -> Result<EncodedDataset> {
    spec.validate()?;
    let (train_rows, test_rows, content_hash) = split_rows(spec, root)?;
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(spec_err("empty train or test split"));
    }
    let categorical: BTreeSet<&str> = spec.categorical.iter().map(String::as_str).collect();
    let mut encodings = Vec::new();
    for c in spec.feature_columns() {
        let name = &spec.columns[c];
        if categorical.contains(name.as_str()) {
            let cats: BTreeSet<&str> = train_rows.iter().map(|r| r[c].as_str()).collect();
            encodings.push(FeatureEncoding::OneHot {
                column: name.clone(),
                categories: cats.into_iter().map(str::to_string).collect(),
            });
        } else {
            let vals = train_rows.iter().map(|r| parse_number(&r[c], name)).collect::<Result<Vec<_>>>()?;
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            encodings.push(FeatureEncoding::Continuous {
                column: name.clone(),
                mean,
                std,
            });
        }
    }
    let mut feature_names = Vec::new();
    for e in &encodings {
        match e {
            FeatureEncoding::Continuous { column, .. } => feature_names.push(column.clone()),
            FeatureEncoding::OneHot { column, categories } => {
                feature_names.extend(categories.iter().map(|t| format!("{column}={t}")));
                feature_names.push(format!("{column}=<unseen>"));
            }
        }
    }
    let width = feature_names.len();
    let encode = |rows: &Rows, split: &str| -> Result<Array2<f64>> {
        let mut x = Array2::<f64>::zeros((rows.len(), width));
        let mut unseen: BTreeMap<&str, usize> = BTreeMap::new();
        for (n, r) in rows.iter().enumerate() {
            let mut off = 0;
            for e in &encodings {
                match e {
                    FeatureEncoding::Continuous { column, mean, std } => {
                        let c = spec.col(column)?;
                        x[[n, off]] = (parse_number(&r[c], column)? - mean) / std;
                    }
                    FeatureEncoding::OneHot { column, categories } => {
                        let c = spec.col(column)?;
                        let slot = match categories.binary_search(&r[c]) {
                            Ok(k) => k,
                            Err(_) => {
                                *unseen.entry(column.as_str()).or_default() += 1;
                                categories.len()
                            }
                        };
                        x[[n, off + slot]] = 1.0;
                    }
                }
                off += e.width();
            }
        }
        for (column, count) in unseen {
            warn!("{split} split: {count} unseen tokens in `{column}` mapped to the unseen bucket");
        }
        Ok(x)
    };
    let label_col = spec.col(&spec.label.column)?;
    let labels = |rows: &Rows| -> Vec<usize> {
        rows.iter()
            .map(|r| usize::from(spec.label.positive.iter().any(|p| p == &r[label_col])))
            .collect()
    };
    let mut sensitive = Vec::new();
    for s in &spec.sensitive {
        let c = spec.col(&s.column)?;
        let alphabet = if s.group_names.len() == s.groups.len() {
            s.group_names.clone()
        } else {
            s.groups.iter().map(|g| g.join("|")).collect()
        };
        sensitive.push(SensitiveColumn {
            name: s.name.clone(),
            alphabet,
            train: encode_sensitive(s, c, &train_rows)?,
            test: encode_sensitive(s, c, &test_rows)?,
        });
    }
    let x_train = encode(&train_rows, "train")?;
    let x_test = encode(&test_rows, "test")?;
    let active: Vec<String> = if spec.active_sensitive.is_empty() {
        spec.sensitive.iter().map(|s| s.name.clone()).collect()
    } else {
        spec.active_sensitive.clone()
    };
    let first = &sensitive[0];
    let ds = EncodedDataset {
        train: Batch::new(x_train, labels(&train_rows), first.train.clone(), 2, first.alphabet.len())?,
        test: Batch::new(x_test, labels(&test_rows), first.test.clone(), 2, first.alphabet.len())?,
        feature_names,
        encodings,
        sensitive,
        active_sensitive: Vec::new(),
        content_hash,
    };
    ds.with_active_sensitive(&active)
}

/// Continuous features for clustering with a binary sensitive column.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringView {
    pub points: Array2<f64>,
    pub sensitive: Vec<usize>,
    pub feature_names: Vec<String>,
}

/// The configured continuous columns of the train split, a seeded subsample
/// of the configured size (all rows if fewer), z-scored over the subsample.
pub fn clustering_view(spec: &DatasetSpec, root: &Path) -> Result<ClusteringView> {
    spec.validate()?;
    let cs = spec
        .clustering
        .as_ref()
        .ok_or_else(|| spec_err(format!("spec `{}` has no clustering section", spec.name)))?;
    let (rows, _, _) = split_rows(spec, root)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cs.seed);
    let take = cs.samples.min(rows.len());
    let mut picked = index::sample(&mut rng, rows.len(), take).into_vec();
    picked.sort_unstable();
    let sens = spec.sensitive.iter().find(|s| s.name == cs.sensitive).expect("validated");
    let scol = spec.col(&sens.column)?;
    let sub: Rows = picked.iter().map(|&i| rows[i].clone()).collect();
    let sensitive = encode_sensitive(sens, scol, &sub)?;
    let mut points = Array2::<f64>::zeros((take, cs.features.len()));
    for (j, f) in cs.features.iter().enumerate() {
        let c = spec.col(f)?;
        let vals = sub.iter().map(|r| parse_number(&r[c], f)).collect::<Result<Vec<_>>>()?;
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        for (i, v) in vals.iter().enumerate() {
            points[[i, j]] = (v - mean) / std;
        }
    }
    Ok(ClusteringView {
        points,
        sensitive,
        feature_names: cs.features.clone(),
    })
}
