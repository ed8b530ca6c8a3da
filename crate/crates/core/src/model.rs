//! Soft classifiers `F(θ, x)` with simplex outputs and hand-written
//! backpropagation.
//!
//! Two architectures share one flat parameter vector `θ`:
//!
//! - `Linear`: `softmax(W x + b)`, with `W` (c × p) then `b` (c).
//! - `OneHidden`: `softmax(W₂ tanh(W₁ x + b₁) + b₂)`, laid out as `W₁` (h × p),
//!   `b₁` (h), `W₂` (c × h), `b₂` (c).
//!
//! All matrices are row-major inside `θ`.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};

/// Probability floor used inside the log of the cross-entropy.
pub const DEFAULT_LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    OneHidden,
}

impl Architecture {
    pub fn tag(self) -> &'static str {
        match self {
            Architecture::Linear => "linear",
            Architecture::OneHidden => "one_hidden",
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Architecture::Linear),
            "one_hidden" => Ok(Architecture::OneHidden),
            other => Err(invalid(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Labeled samples with a discrete sensitive attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Array2<f64>,
    /// Class index in `0..n_classes`.
    pub labels: Vec<usize>,
    /// Group index in `0..n_groups`.
    pub sensitive: Vec<usize>,
    pub n_classes: usize,
    pub n_groups: usize,
}

impl Batch {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        sensitive: Vec<usize>,
        n_classes: usize,
        n_groups: usize,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n || sensitive.len() != n {
            return Err(shape(format!(
                "batch has {n} feature rows, {} labels, {} sensitive values",
                labels.len(),
                sensitive.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(invalid(format!("label {y} outside 0..{n_classes}")));
        }
        if let Some(&g) = sensitive.iter().find(|&&g| g >= n_groups) {
            return Err(invalid(format!("sensitive value {g} outside 0..{n_groups}")));
        }
        Ok(Self {
            features,
            labels,
            sensitive,
            n_classes,
            n_groups,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Batch {
        Batch {
            features: self.features.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            sensitive: idx.iter().map(|&i| self.sensitive[i]).collect(),
            n_classes: self.n_classes,
            n_groups: self.n_groups,
        }
    }
}

/// Flat parameter vector plus the shapes needed to interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    input_dim: usize,
    hidden_dim: usize,
    n_classes: usize,
    theta: Vec<f64>,
}

impl ModelParams {
    fn expected_len(arch: Architecture, p: usize, h: usize, c: usize) -> usize {
        match arch {
            Architecture::Linear => c * p + c,
            Architecture::OneHidden => h * p + h + c * h + c,
        }
    }

    fn check_dims(arch: Architecture, p: usize, h: usize, c: usize) -> Result<()> {
        if p == 0 || c < 2 {
            return Err(invalid(format!(
                "need input_dim ≥ 1 and at least two classes (got {p}, {c})"
            )));
        }
        match (arch, h) {
            (Architecture::Linear, 0) => Ok(()),
            (Architecture::Linear, _) => Err(invalid("linear model takes hidden_dim = 0")),
            (Architecture::OneHidden, 0) => Err(invalid("one-hidden model needs hidden_dim ≥ 1")),
            (Architecture::OneHidden, _) => Ok(()),
        }
    }

    pub fn from_vec(
        arch: Architecture,
        input_dim: usize,
        hidden_dim: usize,
        n_classes: usize,
        theta: Vec<f64>,
    ) -> Result<Self> {
        Self::check_dims(arch, input_dim, hidden_dim, n_classes)?;
        let want = Self::expected_len(arch, input_dim, hidden_dim, n_classes);
        if theta.len() != want {
            return Err(shape(format!("expected {want} parameters, got {}", theta.len())));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(invalid("parameters must be finite"));
        }
        Ok(Self {
            arch,
            input_dim,
            hidden_dim,
            n_classes,
            theta,
        })
    }

    pub fn zeros(arch: Architecture, input_dim: usize, hidden_dim: usize, n_classes: usize) -> Result<Self> {
        let len = Self::expected_len(arch, input_dim, hidden_dim, n_classes);
        Self::from_vec(arch, input_dim, hidden_dim, n_classes, vec![0.0; len])
    }

    /// Glorot-uniform weights `U(−r, r)`, `r = √(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn init(
        arch: Architecture,
        input_dim: usize,
        hidden_dim: usize,
        n_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut params = Self::zeros(arch, input_dim, hidden_dim, n_classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |slice: &mut [f64], fan_in: usize, fan_out: usize| {
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in slice {
                *v = rng.random_range(-r..r);
            }
        };
        let (p, h, c) = (input_dim, hidden_dim, n_classes);
        match arch {
            Architecture::Linear => fill(&mut params.theta[..c * p], p, c),
            Architecture::OneHidden => {
                fill(&mut params.theta[..h * p], p, h);
                let w2 = h * p + h;
                fill(&mut params.theta[w2..w2 + c * h], h, c);
            }
        }
        Ok(params)
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    /// `θ ← θ − η g`.
    pub fn step(&mut self, grad: &[f64], eta: f64) {
        debug_assert_eq!(grad.len(), self.theta.len());
        for (t, g) in self.theta.iter_mut().zip(grad) {
            *t -= eta * g;
        }
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::from_vec(self.arch, self.input_dim, self.hidden_dim, self.n_classes, theta)
    }

    fn view(&self, offset: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.theta[offset..offset + rows * cols])
            .expect("parameter layout")
    }

    fn vec_view(&self, offset: usize, len: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.theta[offset..offset + len])
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(shape(format!(
                "model expects {} features, got {}",
                self.input_dim,
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Pre-softmax scores, plus hidden activations for the one-hidden model.
    fn logits_inner(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Option<Array2<f64>>) {
        let (p, h, c) = (self.input_dim, self.hidden_dim, self.n_classes);
        match self.arch {
            Architecture::Linear => {
                let mut z = x.dot(&self.view(0, c, p).t());
                z += &self.vec_view(c * p, c);
                (z, None)
            }
            Architecture::OneHidden => {
                let mut pre = x.dot(&self.view(0, h, p).t());
                pre += &self.vec_view(h * p, h);
                pre.mapv_inplace(f64::tanh);
                let w2 = h * p + h;
                let mut z = pre.dot(&self.view(w2, c, h).t());
                z += &self.vec_view(w2 + c * h, c);
                (z, Some(pre))
            }
        }
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        Ok(self.logits_inner(x).0)
    }

    /// Class probabilities, one simplex row per sample.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut z = self.logits(x)?;
        softmax_rows(&mut z);
        Ok(z)
    }

    /// Forward pass retained for vector-Jacobian products.
    pub fn jacobian_probs<'a>(&'a self, x: ArrayView2<'a, f64>) -> Result<ProbJacobian<'a>> {
        self.check_input(&x)?;
        let (mut z, hidden) = self.logits_inner(x);
        softmax_rows(&mut z);
        Ok(ProbJacobian {
            params: self,
            x,
            hidden,
            probs: z,
        })
    }

    /// Mean cross-entropy and its gradient.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, Vec<f64>)> {
        self.loss_and_grad_floored(batch, DEFAULT_LOG_FLOOR)
    }

    pub fn loss_and_grad_floored(&self, batch: &Batch, floor: f64) -> Result<(f64, Vec<f64>)> {
        let jac = self.jacobian_probs(batch.features.view())?;
        let (loss, g) = cross_entropy_logit_grad(jac.probs(), &batch.labels, floor)?;
        Ok((loss, jac.vjp_logits(g.view())))
    }
}

/// Cached forward pass exposing `u ↦ Σₙ Σᵢ uₙᵢ ∂Fᵢ(θ, xₙ)/∂θ`.
#[derive(Debug)]
pub struct ProbJacobian<'a> {
    params: &'a ModelParams,
    x: ArrayView2<'a, f64>,
    hidden: Option<Array2<f64>>,
    probs: Array2<f64>,
}

impl ProbJacobian<'_> {
    pub fn probs(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    /// Vector-Jacobian product through the softmax.
    pub fn vjp(&self, u: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if u.dim() != self.probs.dim() {
            return Err(shape(format!(
                "cotangent shape {:?} does not match outputs {:?}",
                u.dim(),
                self.probs.dim()
            )));
        }
        let g = softmax_backward(self.probs.view(), u);
        Ok(self.vjp_logits(g.view()))
    }

    /// Backpropagate a gradient given with respect to the logits.
    pub fn vjp_logits(&self, g: ArrayView2<'_, f64>) -> Vec<f64> {
        let m = self.params;
        let (p, h, c) = (m.input_dim, m.hidden_dim, m.n_classes);
        let mut out = vec![0.0; m.theta.len()];
        match &self.hidden {
            None => {
                let gw = g.t().dot(&self.x);
                out[..c * p].copy_from_slice(gw.as_slice().expect("standard layout"));
                let gb = g.sum_axis(Axis(0));
                out[c * p..].copy_from_slice(gb.as_slice().expect("standard layout"));
            }
            Some(hid) => {
                let w2_off = h * p + h;
                let gw2 = g.t().dot(hid);
                out[w2_off..w2_off + c * h].copy_from_slice(gw2.as_slice().expect("standard layout"));
                let gb2 = g.sum_axis(Axis(0));
                out[w2_off + c * h..].copy_from_slice(gb2.as_slice().expect("standard layout"));
                let mut gh = g.dot(&m.view(w2_off, c, h));
                gh.zip_mut_with(hid, |d, &a| *d *= 1.0 - a * a);
                let gw1 = gh.t().dot(&self.x);
                out[..h * p].copy_from_slice(gw1.as_slice().expect("standard layout"));
                let gb1 = gh.sum_axis(Axis(0));
                out[h * p..h * p + h].copy_from_slice(gb1.as_slice().expect("standard layout"));
            }
        }
        out
    }
}

/// Numerically stable in-place softmax over each row.
pub fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Pull a cotangent on softmax outputs back to the logits:
/// `gₙₖ = Fₙₖ (uₙₖ − Σᵢ uₙᵢ Fₙᵢ)`.
pub fn softmax_backward(probs: ArrayView2<'_, f64>, u: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut g = Array2::<f64>::zeros(probs.dim());
    for ((mut gr, pr), ur) in g
        .axis_iter_mut(Axis(0))
        .zip(probs.axis_iter(Axis(0)))
        .zip(u.axis_iter(Axis(0)))
    {
        let inner = pr.dot(&ur);
        for ((gk, &pk), &uk) in gr.iter_mut().zip(pr).zip(ur) {
            *gk = pk * (uk - inner);
        }
    }
    g
}

/// Mean cross-entropy `−(1/N) Σ log max(F_{yₙ}, floor)` and its gradient with
/// respect to the logits (rows where the floor binds contribute nothing).
pub fn cross_entropy_logit_grad(
    probs: ArrayView2<'_, f64>,
    labels: &[usize],
    floor: f64,
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = probs.dim();
    if labels.len() != n {
        return Err(shape(format!("{} labels for {n} rows", labels.len())));
    }
    if n == 0 {
        return Err(shape("empty batch"));
    }
    let inv_n = 1.0 / n as f64;
    let mut g = probs.to_owned();
    let mut loss = 0.0;
    for ((mut row, &y), pr) in g.axis_iter_mut(Axis(0)).zip(labels).zip(probs.axis_iter(Axis(0))) {
        if y >= c {
            return Err(invalid(format!("label {y} outside 0..{c}")));
        }
        let py = pr[y];
        if py < floor {
            loss -= floor.ln();
            row.fill(0.0);
        } else {
            loss -= py.ln();
            row[y] -= 1.0;
            row *= inv_n;
        }
    }
    Ok((loss * inv_n, g))
}

/// Argmax per row, lowest index on ties.
pub fn hard_predictions(probs: ArrayView2<'_, f64>) -> Vec<usize> {
    probs
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

const CHECKPOINT_MAGIC: &str = "renyi-checkpoint v1";

impl ModelParams {
    /// Text checkpoint: a header with architecture and shapes, then one
    /// parameter per line in shortest round-trip decimal form.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "arch {}", self.arch.tag());
        let _ = writeln!(out, "input_dim {}", self.input_dim);
        let _ = writeln!(out, "hidden_dim {}", self.hidden_dim);
        let _ = writeln!(out, "classes {}", self.n_classes);
        let _ = writeln!(out, "params {}", self.theta.len());
        for v in &self.theta {
            let _ = writeln!(out, "{v:?}");
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let bad = |m: &str| invalid(format!("checkpoint: {m}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CHECKPOINT_MAGIC) {
            return Err(bad("missing header line"));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing `{name}`")))?;
            let (key, value) = line
                .trim()
                .split_once(' ')
                .ok_or_else(|| bad(&format!("malformed line `{line}`")))?;
            if key != name {
                return Err(bad(&format!("expected `{name}`, found `{key}`")));
            }
            Ok(value.trim().to_string())
        };
        let num = |s: String, name: &str| -> Result<usize> {
            s.parse().map_err(|_| bad(&format!("`{name}` is not an integer")))
        };
        let arch: Architecture = field("arch")?.parse()?;
        let input_dim = num(field("input_dim")?, "input_dim")?;
        let hidden_dim = num(field("hidden_dim")?, "hidden_dim")?;
        let classes = num(field("classes")?, "classes")?;
        let count = num(field("params")?, "params")?;
        let theta = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad(&format!("bad value `{l}`"))))
            .collect::<Result<Vec<_>>>()?;
        if theta.len() != count {
            return Err(bad(&format!("header says {count} values, found {}", theta.len())));
        }
        Self::from_vec(arch, input_dim, hidden_dim, classes, theta)
    }
}

/// Weight block of the linear model as a (c × p) matrix; `None` for other
/// architectures.
pub fn linear_weights(params: &ModelParams) -> Option<Array2<f64>> {
    (params.arch == Architecture::Linear).then(|| {
        params
            .view(0, params.n_classes, params.input_dim)
            .to_owned()
    })
}

/// Mean of the rows of `probs` (the soft class marginal).
pub fn mean_probs(probs: ArrayView2<'_, f64>) -> Array1<f64> {
    probs.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(probs.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
    }

    fn random_params(arch: Architecture, p: usize, h: usize, c: usize, seed: u64) -> ModelParams {
        let len = ModelParams::expected_len(arch, p, h, c);
        let theta = random_matrix(1, len, seed).into_raw_vec_and_offset().0;
        ModelParams::from_vec(arch, p, h, c, theta).unwrap()
    }

    /// Loop-based evaluator written independently of the ndarray path.
    fn naive_forward(m: &ModelParams, x: &Array2<f64>) -> Array2<f64> {
        let (p, h, c) = (m.input_dim, m.hidden_dim, m.n_classes);
        let t = &m.theta;
        let mut out = Array2::zeros((x.nrows(), c));
        for n in 0..x.nrows() {
            let feats: Vec<f64> = match m.arch {
                Architecture::Linear => x.row(n).to_vec(),
                Architecture::OneHidden => (0..h)
                    .map(|j| {
                        let mut a = t[h * p + j];
                        for k in 0..p {
                            a += t[j * p + k] * x[[n, k]];
                        }
                        a.tanh()
                    })
                    .collect(),
            };
            let (w_off, width) = match m.arch {
                Architecture::Linear => (0, p),
                Architecture::OneHidden => (h * p + h, h),
            };
            let mut z: Vec<f64> = (0..c)
                .map(|i| {
                    let mut a = t[w_off + c * width + i];
                    for k in 0..width {
                        a += t[w_off + i * width + k] * feats[k];
                    }
                    a
                })
                .collect();
            let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter_mut().map(|v| {
                *v = (*v - mx).exp();
                *v
            }).sum();
            for i in 0..c {
                out[[n, i]] = z[i] / sum;
            }
        }
        out
    }

    #[test]
    fn zero_params_give_uniform_rows() {
        let m = ModelParams::zeros(Architecture::Linear, 3, 0, 4).unwrap();
        let f = m.forward(random_matrix(5, 3, 1).view()).unwrap();
        for v in f.iter() {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn saturation_limit() {
        let m = ModelParams::from_vec(Architecture::Linear, 1, 0, 2, vec![-50.0, 50.0, 0.0, 0.0]).unwrap();
        let f = m.forward(array![[1.0]].view()).unwrap();
        assert_abs_diff_eq!(f[[0, 1]], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(f[[0, 0]], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn forward_matches_naive_evaluator() {
        for (arch, h) in [(Architecture::Linear, 0), (Architecture::OneHidden, 4)] {
            let m = random_params(arch, 5, h, 3, 7);
            let x = random_matrix(11, 5, 8);
            let f = m.forward(x.view()).unwrap();
            let oracle = naive_forward(&m, &x);
            for (a, b) in f.iter().zip(oracle.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            for row in f.axis_iter(Axis(0)) {
                assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
                assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn loss_of_zero_model_is_log_c() {
        let m = ModelParams::zeros(Architecture::Linear, 2, 0, 2).unwrap();
        let batch = Batch::new(random_matrix(6, 2, 3), vec![0, 1, 1, 0, 1, 0], vec![0; 6], 2, 1).unwrap();
        let (loss, _) = m.loss_and_grad(&batch).unwrap();
        assert_abs_diff_eq!(loss, 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn saturated_separable_loss_is_tiny() {
        let m = ModelParams::from_vec(Architecture::Linear, 1, 0, 2, vec![-20.0, 20.0, 0.0, 0.0]).unwrap();
        let x = array![[-1.0], [-2.0], [1.0], [3.0]];
        let batch = Batch::new(x, vec![0, 0, 1, 1], vec![0; 4], 2, 1).unwrap();
        let (loss, _) = m.loss_and_grad(&batch).unwrap();
        assert!(loss <= 1e-4, "loss {loss}");
    }

    fn finite_diff(f: impl Fn(&[f64]) -> f64, theta: &[f64], step: f64) -> Vec<f64> {
        (0..theta.len())
            .map(|k| {
                let mut plus = theta.to_vec();
                let mut minus = theta.to_vec();
                plus[k] += step;
                minus[k] -= step;
                (f(&plus) - f(&minus)) / (2.0 * step)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        num / den
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (arch, h) in [(Architecture::Linear, 0), (Architecture::OneHidden, 3)] {
            let m = random_params(arch, 4, h, 3, 21);
            let x = random_matrix(9, 4, 22);
            let labels = vec![0, 1, 2, 2, 1, 0, 1, 1, 2];
            let batch = Batch::new(x, labels, vec![0; 9], 3, 1).unwrap();
            let (_, grad) = m.loss_and_grad(&batch).unwrap();
            let fd = finite_diff(
                |t| m.with_theta(t.to_vec()).unwrap().loss_and_grad(&batch).unwrap().0,
                m.theta(),
                1e-5,
            );
            assert!(rel_err(&grad, &fd) <= 1e-5, "{arch:?}: {}", rel_err(&grad, &fd));
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        for (arch, h) in [(Architecture::Linear, 0), (Architecture::OneHidden, 3)] {
            let m = random_params(arch, 3, h, 3, 31);
            let x = random_matrix(5, 3, 32);
            let u = random_matrix(5, 3, 33);
            let jac = m.jacobian_probs(x.view()).unwrap();
            let vjp = jac.vjp(u.view()).unwrap();
            let fd = finite_diff(
                |t| {
                    let f = m.with_theta(t.to_vec()).unwrap().forward(x.view()).unwrap();
                    (&f * &u).sum()
                },
                m.theta(),
                1e-5,
            );
            assert!(rel_err(&vjp, &fd) <= 1e-5);

            // one-hot cotangent picks a single output's gradient
            let mut e = Array2::zeros((5, 3));
            e[[2, 1]] = 1.0;
            let col = jac.vjp(e.view()).unwrap();
            let fd = finite_diff(
                |t| m.with_theta(t.to_vec()).unwrap().forward(x.view()).unwrap()[[2, 1]],
                m.theta(),
                1e-5,
            );
            assert!(rel_err(&col, &fd) <= 1e-5);
        }
    }

    #[test]
    fn simplex_rows_have_zero_total_derivative() {
        let m = random_params(Architecture::OneHidden, 3, 4, 4, 41);
        let x = random_matrix(7, 3, 42);
        let jac = m.jacobian_probs(x.view()).unwrap();
        let ones = Array2::from_elem((7, 4), 1.0);
        let g = jac.vjp(ones.view()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn linear_vjp_closed_form() {
        let (p, c, n) = (3, 3, 6);
        let m = random_params(Architecture::Linear, p, 0, c, 51);
        let x = random_matrix(n, p, 52);
        let u = random_matrix(n, c, 53);
        let jac = m.jacobian_probs(x.view()).unwrap();
        let f = jac.probs().to_owned();
        let g = jac.vjp(u.view()).unwrap();
        // Σₙ ((uₙ − (uₙᵀFₙ)1) ∘ Fₙ) xₙᵀ, then the bias block.
        let mut expect = vec![0.0; c * p + c];
        for r in 0..n {
            let inner: f64 = (0..c).map(|i| u[[r, i]] * f[[r, i]]).sum();
            for i in 0..c {
                let coef = (u[[r, i]] - inner) * f[[r, i]];
                for k in 0..p {
                    expect[i * p + k] += coef * x[[r, k]];
                }
                expect[c * p + i] += coef;
            }
        }
        for (a, b) in g.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn loss_is_shift_invariant_in_logits() {
        let (p, c) = (2, 3);
        let m = random_params(Architecture::Linear, p, 0, c, 61);
        let mut shifted = m.theta().to_vec();
        for i in 0..c {
            shifted[c * p + i] += 3.7;
        }
        let shifted = m.with_theta(shifted).unwrap();
        let batch = Batch::new(random_matrix(8, p, 62), vec![0, 1, 2, 0, 1, 2, 0, 1], vec![0; 8], c, 1).unwrap();
        let a = m.loss_and_grad(&batch).unwrap().0;
        let b = shifted.loss_and_grad(&batch).unwrap().0;
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = ModelParams::zeros(Architecture::Linear, 3, 0, 2).unwrap();
        assert!(m.forward(Array2::zeros((2, 4)).view()).is_err());
        let x = Array2::zeros((2, 3));
        let jac = m.jacobian_probs(x.view()).unwrap();
        assert!(jac.vjp(Array2::zeros((3, 2)).view()).is_err());
        assert!(ModelParams::from_vec(Architecture::Linear, 3, 0, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = random_params(Architecture::OneHidden, 3, 2, 2, 71);
        let text = m.to_checkpoint_string();
        assert!(text.starts_with("renyi-checkpoint v1\narch one_hidden\n"));
        let back = ModelParams::from_checkpoint_str(&text).unwrap();
        assert_eq!(back, m);
        assert!(ModelParams::from_checkpoint_str("nope").is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ModelParams::init(Architecture::OneHidden, 10, 12, 2, 5).unwrap();
        let b = ModelParams::init(Architecture::OneHidden, 10, 12, 2, 5).unwrap();
        assert_eq!(a, b);
        let r = (6.0f64 / 22.0).sqrt();
        assert!(a.theta()[..120].iter().all(|v| v.abs() <= r));
        assert!(a.theta()[120..132].iter().all(|&v| v == 0.0));
    }
}
