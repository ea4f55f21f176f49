//! Nested-model comparison: likelihood-ratio tests, χ²(1) tail
//! probabilities and Benjamini-Hochberg control of the false discovery rate.

mod compare;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::features::Feature;
use crate::hawkes::FitResult;

pub use compare::{
    compare_pipeline, write_compare_tsv, write_plot_tsv, CompareOptions, CompareReport, CompareRow, PlotPoint,
};

/// LR statistics below this are treated as an optimization failure.
pub const LR_TOLERANCE: f64 = 1e-6;

/// Upper tail of χ² with one degree of freedom: P(Z² > x) = erfc(√(x/2)).
pub fn chi2_sf_1dof(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    erfc((x / 2.0).sqrt())
}

/// Inverse of [`chi2_sf_1dof`] by bisection. `p` must lie in (0, 1].
pub fn chi2_isf_1dof(p: f64) -> f64 {
    if p >= 1.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while chi2_sf_1dof(hi) > p {
        hi *= 2.0;
        if hi > 1e4 {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_sf_1dof(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub feature: Feature,
    /// 2(𝓛_full − 𝓛_base), clamped at 0.
    pub statistic: f64,
    pub raw_statistic: f64,
    pub p: f64,
    /// The raw statistic fell below −[`LR_TOLERANCE`].
    pub flagged: bool,
}

pub fn lrt(base: &FitResult, full: &FitResult) -> Result<LrtResult> {
    let feature = full.spec.added_over(base.spec).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{} does not extend {} by exactly one feature",
            full.spec, base.spec
        ))
    })?;
    if base.events != full.events {
        return Err(Error::InvalidArgument(format!(
            "fits cover different cascades ({} vs {} events)",
            base.events, full.events
        )));
    }
    let raw = 2.0 * (full.loglik - base.loglik);
    if raw.is_nan() {
        return Err(Error::Infeasible("log-likelihood is NaN".into()));
    }
    let statistic = raw.max(0.0);
    Ok(LrtResult {
        feature,
        statistic,
        raw_statistic: raw,
        p: chi2_sf_1dof(statistic),
        flagged: raw < -LR_TOLERANCE,
    })
}

/// Step-up procedure: with p-values sorted ascending (ties by input index),
/// rejects the `k` smallest where `k` is the largest rank with
/// `p_(k) ≤ k α / m`.
pub fn bh_correct(pvalues: &[f64], alpha: f64) -> Vec<bool> {
    let k = bh_rejections(pvalues, alpha);
    let mut reject = vec![false; pvalues.len()];
    for &i in bh_order(pvalues).iter().take(k) {
        reject[i] = true;
    }
    reject
}

fn bh_order(pvalues: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pvalues.len()).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    order
}

/// Number of hypotheses rejected by [`bh_correct`].
pub fn bh_rejections(pvalues: &[f64], alpha: f64) -> usize {
    let m = pvalues.len() as f64;
    bh_order(pvalues)
        .iter()
        .enumerate()
        .filter(|&(rank, &i)| pvalues[i] <= (rank + 1) as f64 * alpha / m)
        .map(|(rank, _)| rank + 1)
        .max()
        .unwrap_or(0)
}

/// The realized per-test p-value cut-off `k α / m`. When nothing is
/// rejected this is the strictest cut-off `α / m`. Depends on the data.
pub fn bh_threshold(pvalues: &[f64], alpha: f64) -> Option<f64> {
    if pvalues.is_empty() {
        return None;
    }
    let m = pvalues.len() as f64;
    let k = bh_rejections(pvalues, alpha).max(1);
    Some(k as f64 * alpha / m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p: f64,
    pub n: usize,
}

/// Kolmogorov distribution tail Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against Exponential(1), with the
/// Stephens finite-sample correction of the asymptotic p-value.
pub fn ks_exp1(samples: &[f64]) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples for KS test".into()));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let cdf = -(-v.max(0.0)).exp_m1();
        d = d.max((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n);
    }
    let sn = n.sqrt();
    Ok(KsResult {
        statistic: d,
        p: kolmogorov_q((sn + 0.12 + 0.11 / sn) * d),
        n: x.len(),
    })
}
