//! Rényi-correlation fairness: estimators, fair classifiers and fair K-means.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod faircluster;
pub mod fairtrain;
pub mod maxcorr;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
pub use faircluster::{fair_kmeans, ClusterConfig, ClusterRun, ClusterState};
pub use fairtrain::{train, FairnessMode, TrainConfig, TrainTrace};
pub use maxcorr::{renyi_binary, renyi_discrete, JointTable, QMatrix};
pub use metrics::EvalReport;
pub use model::{Architecture, Batch, ModelParams};
