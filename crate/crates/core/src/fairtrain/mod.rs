//! Fair training by alternating an inner maximization over the adversary's
//! variables with a gradient step on the model parameters.
//!
//! Every trainer shares one loop ([`train`]); the fairness mode only changes
//! how the penalty and its gradient seed are computed. The seed is the
//! derivative of the penalty with respect to the soft outputs, so one
//! backward pass through the model covers loss and penalty together.

mod baselines;
mod penalty;
mod sensitive;

use std::fmt::Write as _;

use log::{debug, warn};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::maxcorr::{empirical_q, DEFAULT_FLOOR};
use crate::model::{cross_entropy_logit_grad, softmax_backward, Batch, ModelParams, DEFAULT_LOG_FLOOR};

pub use baselines::{hsic_penalty, pearson_penalty, HsicKernel, ScoreKernel, SensitiveKernel, MAX_GAUSSIAN_HSIC_SAMPLES};
pub use penalty::{
    binary_objective_penalty, binary_objective_w_gradient, binary_offset, discrete_inner_max,
    fixed_v_penalty, inner_w_closed_form, s_tilde,
};
pub use sensitive::{combine_sensitive, CombinedSensitive};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessMode {
    #[default]
    None,
    DpDiscrete,
    DpBinary,
    Eo,
    Pearson,
    Hsic,
}

impl FairnessMode {
    pub fn tag(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::DpDiscrete => "dp_discrete",
            Self::DpBinary => "dp_binary",
            Self::Eo => "eo",
            Self::Pearson => "pearson",
            Self::Hsic => "hsic",
        }
    }
}

impl std::str::FromStr for FairnessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Self::None,
            "dp_discrete" => Self::DpDiscrete,
            "dp_binary" => Self::DpBinary,
            "eo" => Self::Eo,
            "pearson" => Self::Pearson,
            "hsic" => Self::Hsic,
            other => return Err(invalid(format!("unknown fairness mode `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BatchMode {
    #[default]
    Full,
    /// Reshuffled every epoch; the last batch of an epoch may be short.
    Minibatch { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub eta: f64,
    /// Iteration cap `T`.
    pub max_iters: usize,
    pub batch_mode: BatchMode,
    /// Probability floor for marginals and the binary denominators.
    pub floor: f64,
    pub seed: u64,
    pub fairness: FairnessMode,
    pub grad_tol: f64,
    pub eo_min_group: usize,
    /// Labels whose slices are penalized in `eo` mode; empty means every
    /// label. `[1]` targets equality of opportunity.
    pub eo_labels: Vec<usize>,
    pub hsic_kernel: HsicKernel,
    /// Lower clamp on the score variance in the Pearson penalty.
    pub pearson_var_floor: f64,
    pub log_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            eta: 0.1,
            max_iters: 5000,
            batch_mode: BatchMode::Full,
            floor: DEFAULT_FLOOR,
            seed: 0,
            fairness: FairnessMode::None,
            grad_tol: 0.0,
            eo_min_group: 30,
            eo_labels: Vec::new(),
            hsic_kernel: HsicKernel::default(),
            pearson_var_floor: 1e-8,
            log_floor: DEFAULT_LOG_FLOOR,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.floor > 0.0) {
            return Err(invalid("floor must be positive"));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(invalid("grad_tol must be nonnegative"));
        }
        if let BatchMode::Minibatch { size: 0 } = self.batch_mode {
            return Err(invalid("minibatch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// Mean cross-entropy on the batch used at this iteration.
    pub loss: f64,
    /// Unscaled penalty; the objective is `loss + λ·penalty`.
    pub penalty: f64,
    /// Norm of the full objective gradient.
    pub grad_norm: f64,
    /// Empirical Rényi correlation between the soft prediction and S.
    pub sigma2: f64,
    /// The inner maximizer: `v` for the discrete mode, `w` for the binary
    /// mode, per-label `σ₂` for equalized odds; empty otherwise.
    pub inner: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    GradTol,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    pub params: ModelParams,
    pub stop: StopReason,
    /// Labels whose conditional slice took part in the equalized-odds
    /// penalty (empty in other modes).
    pub eo_labels: Vec<usize>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// `iter,loss,penalty,grad_norm,sigma2` with one line per record.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,loss,penalty,grad_norm,sigma2\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:?},{:?},{:?},{:?}", r.iter, r.loss, r.penalty, r.grad_norm, r.sigma2);
        }
        out
    }
}

/// Penalty, its seed `∂penalty/∂F` and diagnostics at the current iterate.
struct PenaltyEval {
    value: f64,
    seed: Option<Array2<f64>>,
    sigma2: Option<f64>,
    inner: Vec<f64>,
}

impl PenaltyEval {
    fn none() -> Self {
        Self {
            value: 0.0,
            seed: None,
            sigma2: None,
            inner: Vec::new(),
        }
    }
}

fn eval_penalty(probs: ArrayView2<'_, f64>, batch: &Batch, cfg: &TrainConfig, eo_labels: &[usize]) -> Result<PenaltyEval> {
    let (s, d) = (&batch.sensitive, batch.n_groups);
    Ok(match cfg.fairness {
        FairnessMode::None => PenaltyEval::none(),
        FairnessMode::DpDiscrete => {
            let (v, sigma2) = discrete_inner_max(probs, s, d, cfg.floor)?;
            let (value, seed) = fixed_v_penalty(probs, s, d, &v, cfg.floor)?;
            PenaltyEval {
                value,
                seed: Some(seed),
                sigma2: Some(sigma2),
                inner: v.to_vec(),
            }
        }
        FairnessMode::DpBinary => {
            let st = s_tilde(s)?;
            let w = inner_w_closed_form(probs, &st, cfg.floor)?;
            let (value, seed) = binary_objective_penalty(probs, &st, &w)?;
            PenaltyEval {
                value: (value - binary_offset(&st)).max(0.0),
                seed: Some(seed),
                sigma2: None,
                inner: w,
            }
        }
        FairnessMode::Eo => eo_penalty(probs, batch, cfg, eo_labels)?,
        FairnessMode::Pearson => {
            let (value, seed) = pearson_penalty(probs, s, cfg.pearson_var_floor)?;
            PenaltyEval {
                value,
                seed: Some(seed),
                sigma2: None,
                inner: Vec::new(),
            }
        }
        FairnessMode::Hsic => {
            let (value, seed) = hsic_penalty(probs, s, &cfg.hsic_kernel)?;
            PenaltyEval {
                value,
                seed: Some(seed),
                sigma2: None,
                inner: Vec::new(),
            }
        }
    })
}

/// Labels whose slice has at least `min_group` samples in every sensitive
/// group.
pub fn eo_participating_labels(batch: &Batch, min_group: usize) -> Vec<usize> {
    let mut counts = vec![vec![0usize; batch.n_groups]; batch.n_classes];
    for (&y, &s) in batch.labels.iter().zip(&batch.sensitive) {
        counts[y][s] += 1;
    }
    (0..batch.n_classes)
        .filter(|&y| {
            let ok = counts[y].iter().all(|&m| m >= min_group.max(1));
            if !ok {
                warn!(
                    "equalized odds: label {y} skipped, group counts {:?} below minimum {min_group}",
                    counts[y]
                );
            }
            ok
        })
        .collect()
}

/// Participating labels restricted to `cfg.eo_labels`.
fn eo_slices(batch: &Batch, cfg: &TrainConfig) -> Vec<usize> {
    eo_participating_labels(batch, cfg.eo_min_group)
        .into_iter()
        .filter(|y| cfg.eo_labels.is_empty() || cfg.eo_labels.contains(y))
        .collect()
}

/// Sum over labels of the per-slice penalty; each slice uses the binary
/// route for two groups and the SVD route otherwise.
fn eo_penalty(probs: ArrayView2<'_, f64>, batch: &Batch, cfg: &TrainConfig, labels: &[usize]) -> Result<PenaltyEval> {
    let (n, c) = probs.dim();
    let d = batch.n_groups;
    let mut seed = Array2::<f64>::zeros((n, c));
    let mut value = 0.0;
    let mut inner = Vec::with_capacity(labels.len());
    for &y in labels {
        let idx: Vec<usize> = (0..n).filter(|&k| batch.labels[k] == y).collect();
        let sub_p = probs.select(Axis(0), &idx);
        let sub_s: Vec<usize> = idx.iter().map(|&k| batch.sensitive[k]).collect();
        let (v, sub_seed) = if d == 2 {
            let st = s_tilde(&sub_s)?;
            let w = inner_w_closed_form(sub_p.view(), &st, cfg.floor)?;
            let (v, sd) = binary_objective_penalty(sub_p.view(), &st, &w)?;
            ((v - binary_offset(&st)).max(0.0), sd)
        } else {
            let (v, _) = discrete_inner_max(sub_p.view(), &sub_s, d, cfg.floor)?;
            fixed_v_penalty(sub_p.view(), &sub_s, d, &v, cfg.floor)?
        };
        value += v;
        inner.push(soft_sigma2(sub_p.view(), &sub_s, d, cfg.floor)?);
        for (r, &k) in idx.iter().enumerate() {
            seed.row_mut(k).assign(&sub_seed.row(r));
        }
    }
    Ok(PenaltyEval {
        value,
        seed: Some(seed),
        sigma2: None,
        inner,
    })
}

/// `σ₂` of the empirical `Q` built from soft outputs; 0 with a single group.
pub fn soft_sigma2(probs: ArrayView2<'_, f64>, sensitive: &[usize], n_groups: usize, floor: f64) -> Result<f64> {
    if n_groups < 2 {
        return Ok(0.0);
    }
    empirical_q(probs, sensitive, n_groups, floor)?.sigma2()
}

/// `Σ_y σ₂²` over the label slices that meet the minimum group size.
pub fn eo_sigma2_sq_sum(params: &ModelParams, batch: &Batch, floor: f64, min_group: usize) -> Result<f64> {
    let probs = params.forward(batch.features.view())?;
    let mut total = 0.0;
    for y in eo_participating_labels(batch, min_group) {
        let idx: Vec<usize> = (0..batch.len()).filter(|&k| batch.labels[k] == y).collect();
        let sub_s: Vec<usize> = idx.iter().map(|&k| batch.sensitive[k]).collect();
        let s2 = soft_sigma2(probs.select(Axis(0), &idx).view(), &sub_s, batch.n_groups, floor)?;
        total += s2 * s2;
    }
    Ok(total)
}

struct StepEval {
    record: TraceRecord,
    grad: Vec<f64>,
}

fn evaluate(params: &ModelParams, batch: &Batch, cfg: &TrainConfig, iter: usize, eo_labels: &[usize]) -> Result<StepEval> {
    let jac = params.jacobian_probs(batch.features.view())?;
    let probs = jac.probs();
    let (loss, mut logit_grad) = cross_entropy_logit_grad(probs, &batch.labels, cfg.log_floor)?;
    let pen = eval_penalty(probs, batch, cfg, eo_labels)?;
    if cfg.lambda != 0.0 {
        if let Some(seed) = &pen.seed {
            let scaled = seed.mapv(|g| cfg.lambda * g);
            logit_grad += &softmax_backward(probs, scaled.view());
        }
    }
    let grad = jac.vjp_logits(logit_grad.view());
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let sigma2 = match pen.sigma2 {
        Some(s) => s,
        None => soft_sigma2(probs, &batch.sensitive, batch.n_groups, cfg.floor)?,
    };
    Ok(StepEval {
        record: TraceRecord {
            iter,
            loss,
            penalty: pen.value,
            grad_norm,
            sigma2,
            inner: pen.inner,
        },
        grad,
    })
}

fn finite(r: &TraceRecord) -> bool {
    r.loss.is_finite()
        && r.penalty.is_finite()
        && r.grad_norm.is_finite()
        && r.sigma2.is_finite()
        && r.inner.iter().all(|v| v.is_finite())
}

/// Yields the batch for each iteration.
enum Batches<'a> {
    Full(&'a Batch),
    Mini {
        data: &'a Batch,
        size: usize,
        order: Vec<usize>,
        pos: usize,
        rng: Box<ChaCha8Rng>,
    },
}

impl<'a> Batches<'a> {
    fn new(batch: &'a Batch, cfg: &TrainConfig) -> Self {
        match cfg.batch_mode {
            BatchMode::Minibatch { size } if size < batch.len() => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let mut order: Vec<usize> = (0..batch.len()).collect();
                order.shuffle(&mut rng);
                Batches::Mini {
                    data: batch,
                    size,
                    order,
                    pos: 0,
                    rng: Box::new(rng),
                }
            }
            _ => Batches::Full(batch),
        }
    }

    fn next(&mut self) -> std::borrow::Cow<'a, Batch> {
        match self {
            Batches::Full(b) => std::borrow::Cow::Borrowed(*b),
            Batches::Mini {
                data,
                size,
                order,
                pos,
                rng,
            } => {
                if *pos >= order.len() {
                    order.shuffle(rng);
                    *pos = 0;
                }
                let end = (*pos + *size).min(order.len());
                let sub = data.subset(&order[*pos..end]);
                *pos = end;
                std::borrow::Cow::Owned(sub)
            }
        }
    }
}

/// Run the configured trainer from `init`.
///
/// Each iteration records diagnostics at the current iterate, stops if the
/// gradient norm is at most `grad_tol`, and otherwise takes one step. After
/// `max_iters` steps a final record is taken at the last iterate, so the trace
/// has at most `max_iters + 1` records. A non-finite value aborts with
/// [`Error::Diverged`] carrying the trace so far.
pub fn train(init: &ModelParams, batch: &Batch, cfg: &TrainConfig) -> Result<TrainTrace> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(invalid("empty training batch"));
    }
    match cfg.fairness {
        FairnessMode::DpDiscrete | FairnessMode::Eo if batch.n_groups < 2 => {
            return Err(invalid("fairness mode needs at least two sensitive groups"));
        }
        FairnessMode::DpBinary | FairnessMode::Pearson | FairnessMode::Hsic if batch.n_groups != 2
            // the baselines accept a d-ary numeric code as well
            && cfg.fairness == FairnessMode::DpBinary => {
                return Err(invalid(format!("dp_binary needs two sensitive groups, got {}", batch.n_groups)));
            }
        _ => {}
    }
    let eo_labels = if cfg.fairness == FairnessMode::Eo {
        eo_slices(batch, cfg)
    } else {
        Vec::new()
    };
    let minibatch = matches!(cfg.batch_mode, BatchMode::Minibatch { size } if size < batch.len());
    let mut params = init.clone();
    let mut records = Vec::with_capacity(cfg.max_iters + 1);
    let mut batches = Batches::new(batch, cfg);
    let mut stop = StopReason::MaxIters;

    for t in 0..=cfg.max_iters {
        let current = if t == cfg.max_iters && minibatch {
            std::borrow::Cow::Borrowed(batch)
        } else {
            batches.next()
        };
        let labels = if minibatch && cfg.fairness == FairnessMode::Eo {
            eo_slices(&current, cfg)
        } else {
            eo_labels.clone()
        };
        let step = match evaluate(&params, &current, cfg, t, &labels) {
            Ok(s) => s,
            Err(Error::EmptyGroup(g)) if minibatch => {
                // a short minibatch can miss a group; fall back to the loss alone
                debug!("iteration {t}: group {g} absent from minibatch, penalty skipped");
                loss_only(&params, &current, cfg, t)?
            }
            Err(e) => return Err(e),
        };
        if !finite(&step.record) || step.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                iter: t,
                trace: Box::new(TrainTrace {
                    records,
                    params,
                    stop,
                    eo_labels,
                }),
            });
        }
        let grad_norm = step.record.grad_norm;
        records.push(step.record);
        if t == cfg.max_iters {
            break;
        }
        if grad_norm <= cfg.grad_tol {
            stop = StopReason::GradTol;
            break;
        }
        params.step(&step.grad, cfg.eta);
    }
    Ok(TrainTrace {
        records,
        params,
        stop,
        eo_labels,
    })
}

fn loss_only(params: &ModelParams, batch: &Batch, cfg: &TrainConfig, iter: usize) -> Result<StepEval> {
    let jac = params.jacobian_probs(batch.features.view())?;
    let (loss, g) = cross_entropy_logit_grad(jac.probs(), &batch.labels, cfg.log_floor)?;
    let grad = jac.vjp_logits(g.view());
    let grad_norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(StepEval {
        record: TraceRecord {
            iter,
            loss,
            penalty: 0.0,
            grad_norm,
            sigma2: 0.0,
            inner: Vec::new(),
        },
        grad,
    })
}

fn require(cfg: &TrainConfig, mode: FairnessMode) -> Result<()> {
    if cfg.fairness == mode {
        Ok(())
    } else {
        Err(invalid(format!(
            "trainer expects fairness mode `{}`, config has `{}`",
            mode.tag(),
            cfg.fairness.tag()
        )))
    }
}

/// Discrete sensitive attribute with the SVD inner maximization.
pub fn train_discrete(init: &ModelParams, batch: &Batch, cfg: &TrainConfig) -> Result<TrainTrace> {
    require(cfg, FairnessMode::DpDiscrete)?;
    train(init, batch, cfg)
}

/// Binary sensitive attribute with the closed-form inner maximization.
pub fn train_binary(init: &ModelParams, batch: &Batch, cfg: &TrainConfig) -> Result<TrainTrace> {
    require(cfg, FairnessMode::DpBinary)?;
    train(init, batch, cfg)
}

pub fn train_equalized_odds(init: &ModelParams, batch: &Batch, cfg: &TrainConfig) -> Result<TrainTrace> {
    require(cfg, FairnessMode::Eo)?;
    train(init, batch, cfg)
}

/// Objective value `loss + λ·penalty` and its θ-gradient at `params`, with
/// the inner variables chosen as in the trainer. Exposed for gradient checks.
pub fn objective_and_grad(params: &ModelParams, batch: &Batch, cfg: &TrainConfig) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let labels = if cfg.fairness == FairnessMode::Eo {
        eo_slices(batch, cfg)
    } else {
        Vec::new()
    };
    let s = evaluate(params, batch, cfg, 0, &labels)?;
    Ok((s.record.loss + cfg.lambda * s.record.penalty, s.grad, s.record.inner))
}

/// Soft outputs of `params` on `batch` as an owned matrix.
pub fn predict_probs(params: &ModelParams, batch: &Batch) -> Result<Array2<f64>> {
    params.forward(batch.features.view())
}

/// `‖Q_θ v‖²` at fixed `v` as a function of θ alone (for gradient checks).
pub fn fixed_v_objective(params: &ModelParams, batch: &Batch, v: &Array1<f64>, floor: f64) -> Result<(f64, Vec<f64>)> {
    let jac = params.jacobian_probs(batch.features.view())?;
    let (value, seed) = fixed_v_penalty(jac.probs(), &batch.sensitive, batch.n_groups, v, floor)?;
    Ok((value, jac.vjp(seed.view())?))
}

/// `f_B` penalty part at fixed `w` as a function of θ alone.
pub fn fixed_w_objective(params: &ModelParams, batch: &Batch, w: &[f64]) -> Result<(f64, Vec<f64>)> {
    let jac = params.jacobian_probs(batch.features.view())?;
    let st = s_tilde(&batch.sensitive)?;
    let (value, seed) = binary_objective_penalty(jac.probs(), &st, w)?;
    Ok((value, jac.vjp(seed.view())?))
}
