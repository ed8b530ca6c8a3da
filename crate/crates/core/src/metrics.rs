//! Accuracy and fairness metrics on hard predictions.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_len(preds.len(), labels.len(), "labels")?;
    if preds.is_empty() {
        return Err(shape("no predictions"));
    }
    let hits = preds.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / preds.len() as f64)
}

fn check_len(n: usize, m: usize, what: &str) -> Result<()> {
    if n != m {
        return Err(shape(format!("{n} predictions but {m} {what}")));
    }
    Ok(())
}

/// `P(Ŷ = 1 | S = g)` for every group, `None` for groups with no samples.
pub fn positive_rates(preds: &[usize], sensitive: &[usize], n_groups: usize) -> Result<Vec<Option<f64>>> {
    check_len(preds.len(), sensitive.len(), "sensitive values")?;
    let mut pos = vec![0usize; n_groups];
    let mut tot = vec![0usize; n_groups];
    for (&p, &s) in preds.iter().zip(sensitive) {
        if s >= n_groups {
            return Err(invalid(format!("sensitive value {s} outside 0..{n_groups}")));
        }
        tot[s] += 1;
        pos[s] += usize::from(p == 1);
    }
    Ok(pos
        .iter()
        .zip(&tot)
        .map(|(&a, &b)| (b > 0).then(|| a as f64 / b as f64))
        .collect())
}

/// `min(r₁/r₀, r₀/r₁)` of the positive rates of the two groups: 1 when both
/// rates are 0 and 0 when exactly one is.
pub fn p_percent(preds: &[usize], sensitive: &[usize]) -> Result<f64> {
    let rates = positive_rates(preds, sensitive, 2)?;
    let (r0, r1) = match (rates[0], rates[1]) {
        (Some(a), Some(b)) => (a, b),
        (None, _) => return Err(Error::EmptyGroup(0)),
        (_, None) => return Err(Error::EmptyGroup(1)),
    };
    Ok(ratio_min(r0, r1))
}

fn ratio_min(r0: f64, r1: f64) -> f64 {
    match (r0 == 0.0, r1 == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (r1 / r0).min(r0 / r1),
    }
}

/// Largest pairwise gap of positive rates; empty groups are skipped.
pub fn dp_violation(preds: &[usize], sensitive: &[usize], n_groups: usize) -> Result<f64> {
    let rates = positive_rates(preds, sensitive, n_groups)?;
    let present: Vec<f64> = rates
        .iter()
        .enumerate()
        .filter_map(|(g, r)| {
            if r.is_none() {
                warn!("dp_violation: group {g} is empty and excluded");
            }
            *r
        })
        .collect();
    if present.len() < 2 {
        return Err(invalid("dp_violation needs at least two nonempty groups"));
    }
    let max = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = present.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// `|P(Ŷ=1 | S=1, Y=1) − P(Ŷ=1 | S=0, Y=1)|`.
pub fn eo_violation(preds: &[usize], sensitive: &[usize], labels: &[usize]) -> Result<f64> {
    check_len(preds.len(), labels.len(), "labels")?;
    check_len(preds.len(), sensitive.len(), "sensitive values")?;
    let mut pos = [0usize; 2];
    let mut tot = [0usize; 2];
    for ((&p, &s), &y) in preds.iter().zip(sensitive).zip(labels) {
        if s > 1 {
            return Err(invalid(format!("binary sensitive value expected, got {s}")));
        }
        if y == 1 {
            tot[s] += 1;
            pos[s] += usize::from(p == 1);
        }
    }
    if let Some(g) = tot.iter().position(|&t| t == 0) {
        return Err(invalid(format!("no positive-label samples in group {g}")));
    }
    Ok((pos[1] as f64 / tot[1] as f64 - pos[0] as f64 / tot[0] as f64).abs())
}

/// `I(A;B) / √(H(A)·H(B))` from empirical counts with natural logarithms;
/// 0 when either entropy vanishes.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    check_len(a.len(), b.len(), "sensitive values")?;
    if a.is_empty() {
        return Err(shape("nmi of empty samples"));
    }
    let ka = a.iter().max().copied().unwrap_or(0) + 1;
    let kb = b.iter().max().copied().unwrap_or(0) + 1;
    let mut joint = vec![0.0; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * kb + y] += 1.0;
    }
    let n = a.len() as f64;
    joint.iter_mut().for_each(|v| *v /= n);
    Ok(nmi_from_joint(&joint, ka, kb))
}

/// NMI of a row-major joint distribution.
pub fn nmi_from_joint(joint: &[f64], rows: usize, cols: usize) -> f64 {
    let mut pa = vec![0.0; rows];
    let mut pb = vec![0.0; cols];
    for i in 0..rows {
        for j in 0..cols {
            pa[i] += joint[i * cols + j];
            pb[j] += joint[i * cols + j];
        }
    }
    let entropy = |p: &[f64]| -> f64 { p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum() };
    let (ha, hb) = (entropy(&pa), entropy(&pb));
    if ha <= 0.0 || hb <= 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let p = joint[i * cols + j];
            if p > 0.0 {
                mi += p * (p / (pa[i] * pb[j])).ln();
            }
        }
    }
    (mi.max(0.0) / (ha * hb).sqrt()).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Statistics of the cluster proportions over clusters with `counts > 0`.
pub fn proportion_stats(proportions: &[f64], counts: &[usize]) -> Result<ProportionStats> {
    check_len(proportions.len(), counts.len(), "counts")?;
    let live: Vec<f64> = proportions
        .iter()
        .zip(counts)
        .filter(|(_, &c)| c > 0)
        .map(|(&w, _)| w)
        .collect();
    if live.is_empty() {
        return Err(invalid("no nonempty clusters"));
    }
    let m = live.len() as f64;
    let mean = live.iter().sum::<f64>() / m;
    let var = live.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / m;
    Ok(ProportionStats {
        min: live.iter().copied().fold(f64::INFINITY, f64::min),
        max: live.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        std: var.sqrt(),
    })
}

/// Cluster-proportion statistics of a clustering state.
pub fn cluster_fairness(state: &crate::faircluster::ClusterState) -> Result<ProportionStats> {
    proportion_stats(&state.proportions, &state.counts)
}

/// Metrics of one classifier on one split. Fields that do not apply to the
/// data (for example `p_percent` with more than two groups) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub p_percent: Option<f64>,
    pub dp_violation: Option<f64>,
    pub eo_violation: Option<f64>,
    pub nmi: f64,
    pub sigma2: f64,
    /// `P(Ŷ = 1 | S = g)` per group.
    pub positive_rates: Vec<Option<f64>>,
}

pub const REPORT_CSV_HEADER: &str = "n,accuracy,p_percent,dp_violation,eo_violation,nmi,sigma2";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl EvalReport {
    /// Evaluate hard predictions; `sigma2` is the empirical Rényi correlation
    /// supplied by the caller.
    pub fn from_predictions(
        preds: &[usize],
        labels: &[usize],
        sensitive: &[usize],
        n_groups: usize,
        sigma2: f64,
    ) -> Result<Self> {
        let binary = n_groups == 2;
        let rates = positive_rates(preds, sensitive, n_groups)?;
        Ok(Self {
            n: preds.len(),
            accuracy: accuracy(preds, labels)?,
            p_percent: if binary { p_percent(preds, sensitive).ok() } else { None },
            dp_violation: dp_violation(preds, sensitive, n_groups).ok(),
            eo_violation: if binary { eo_violation(preds, sensitive, labels).ok() } else { None },
            nmi: nmi(preds, sensitive)?,
            sigma2,
            positive_rates: rates,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// One CSV row matching [`REPORT_CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{},{},{},{:?},{:?}",
            self.n,
            self.accuracy,
            opt(self.p_percent),
            opt(self.dp_violation),
            opt(self.eo_violation),
            self.nmi,
            self.sigma2
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Predictions with exactly `k` positives among the first `n` entries.
    fn block(n: usize, k: usize) -> Vec<usize> {
        (0..n).map(|i| usize::from(i < k)).collect()
    }

    #[test]
    fn p_percent_examples() {
        let mut preds = block(10, 3);
        preds.extend(block(10, 6));
        let s: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        assert_abs_diff_eq!(p_percent(&preds, &s).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(dp_violation(&preds, &s, 2).unwrap(), 0.3, epsilon = 1e-15);
        let equal = [block(10, 4), block(10, 4)].concat();
        assert_eq!(p_percent(&equal, &s).unwrap(), 1.0);
        assert_eq!(p_percent(&[0; 20], &s).unwrap(), 1.0);
        assert_eq!(p_percent(&[block(10, 0), block(10, 2)].concat(), &s).unwrap(), 0.0);
        assert!(p_percent(&[0, 1], &[0, 0]).is_err());
    }

    #[test]
    fn dp_violation_three_groups() {
        let preds = [block(10, 2), block(10, 5), block(10, 9)].concat();
        let s: Vec<usize> = (0..30).map(|i| i / 10).collect();
        assert_abs_diff_eq!(dp_violation(&preds, &s, 3).unwrap(), 0.7, epsilon = 1e-15);
        let same = [block(10, 3), block(10, 3), block(10, 3), block(10, 3)].concat();
        let s4: Vec<usize> = (0..40).map(|i| i / 10).collect();
        assert_eq!(dp_violation(&same, &s4, 4).unwrap(), 0.0);
    }

    #[test]
    fn eo_violation_examples() {
        let labels = vec![1; 20];
        let s: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let preds = [block(10, 7), block(10, 9)].concat();
        assert_abs_diff_eq!(eo_violation(&preds, &s, &labels).unwrap(), 0.2, epsilon = 1e-15);
        let preds = [block(10, 7), block(10, 7)].concat();
        assert_eq!(eo_violation(&preds, &s, &labels).unwrap(), 0.0);
    }

    #[test]
    fn nmi_examples() {
        // independent product counts
        let a = [0, 0, 1, 1, 0, 0, 1, 1];
        let b = [0, 1, 0, 1, 0, 1, 0, 1];
        assert!(nmi(&a, &b).unwrap() < 1e-9);
        assert_abs_diff_eq!(nmi(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(nmi(&[0, 0, 0], &[0, 1, 1]).unwrap(), 0.0);
        // [[0.4, 0.1], [0.1, 0.4]]: H = ln 2 for both marginals
        let joint = [0.4, 0.1, 0.1, 0.4];
        let mi = 0.8 * (0.4f64 / 0.25).ln() + 0.2 * (0.1f64 / 0.25).ln();
        assert_abs_diff_eq!(nmi_from_joint(&joint, 2, 2), mi / 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn proportion_stats_examples() {
        let st = proportion_stats(&[0.3, 0.3, 0.3], &[4, 5, 6]).unwrap();
        assert_eq!(st.std, 0.0);
        let st = proportion_stats(&[1.0, 0.0, 0.7], &[3, 3, 0]).unwrap();
        assert_abs_diff_eq!(st.std, 0.5, epsilon = 1e-15);
        assert_eq!((st.min, st.max, st.mean), (0.0, 1.0, 0.5));
    }

    #[test]
    fn report_row_matches_header() {
        let r = EvalReport::from_predictions(&[0, 1, 1, 0], &[0, 1, 0, 0], &[0, 0, 1, 1], 2, 0.1).unwrap();
        assert_eq!(r.csv_row().split(',').count(), REPORT_CSV_HEADER.split(',').count());
        assert!(r.to_json().contains("\"accuracy\":0.75"));
    }
}
