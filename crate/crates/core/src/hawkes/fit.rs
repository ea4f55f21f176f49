//! Constrained maximum likelihood by block coordinate ascent.
//!
//! Each outer iteration maximizes over θ ≥ 0 with a projected Newton method
//! (at most four coordinates, so the Hessian is tiny), then maximizes each
//! base intensity μ_m ≥ 0 exactly. With θ fixed the objective separates
//! over users into one-dimensional concave problems
//!
//! ```text
//! g_m(μ) = Σ_{n: m_n = m} ln(μ + e_n) − T μ,   e_n = θ·S_n ≥ 0,
//! ```
//!
//! solved by safeguarded Newton on g_m' with a bisection fallback.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::Cascade;
use crate::error::{Error, Result};
use crate::features::{Feature, FeatureContext, ModelSpec, NUM_FEATURES};
use crate::graph::SocialGraph;

use super::precompute::CHUNK;
use super::{dot, Kernel, Params, Precomputed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Stop once an outer iteration improves 𝓛 by less than this.
    pub tol_abs: f64,
    pub max_iterations: usize,
    /// Starting value for each active weight.
    pub theta_init: f64,
    /// When false, θ stays at zero and only base intensities are fitted.
    pub fit_theta: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tol_abs: 1e-6,
            max_iterations: 500,
            theta_init: 1e-4,
            fit_theta: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub params: Params,
    pub loglik: f64,
    /// 𝓛 at the start and after every outer iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub events: usize,
}

impl FitResult {
    pub fn theta(&self, f: Feature) -> f64 {
        self.params.theta[f.index()]
    }
}

pub fn fit(
    graph: &SocialGraph,
    ctx: &FeatureContext,
    cascade: &Cascade,
    spec: ModelSpec,
    kernel: Kernel,
    config: &FitConfig,
) -> Result<FitResult> {
    let pre = Precomputed::new(graph, ctx, cascade, kernel)?;
    fit_precomputed(&pre, spec, config)
}

pub fn fit_precomputed(pre: &Precomputed, spec: ModelSpec, config: &FitConfig) -> Result<FitResult> {
    if pre.is_empty() {
        return Err(Error::InvalidArgument("cannot fit an empty cascade".into()));
    }
    let horizon = pre.horizon;
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("cascade horizon must be positive".into()));
    }

    // Features the data cannot distinguish from zero are pinned there.
    let mut free = [false; NUM_FEATURES];
    if config.fit_theta {
        for f in spec.features().iter() {
            free[f.index()] = pre.has_support(f.index());
        }
    }
    let mut theta = [0.0; NUM_FEATURES];
    for d in 0..NUM_FEATURES {
        if free[d] {
            theta[d] = config.theta_init;
        }
    }
    let mut mu: Vec<f64> = pre.events_of.iter().map(|evs| evs.len() as f64 / horizon).collect();

    let objective = |theta: &[f64; NUM_FEATURES], mu: &[f64]| pre.evaluate(theta, mu, mu.iter().sum());
    let mut ll = objective(&theta, &mu);
    if !ll.is_finite() {
        return Err(Error::Infeasible(format!(
            "log-likelihood at the initial point is {ll}"
        )));
    }

    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let before = ll;

        if free.iter().any(|&f| f) {
            let (t, v) = theta_block(pre, theta, &mu, &free, ll, config.tol_abs);
            if v >= ll {
                theta = t;
                ll = v;
            }
        }

        let candidate = mu_block(pre, &theta, &mu);
        let v = objective(&theta, &candidate);
        if v >= ll {
            mu = candidate;
            ll = v;
        }

        trace.push(ll);
        if (ll - before).abs() < config.tol_abs {
            converged = true;
            break;
        }
    }

    let params = Params {
        theta,
        mu: pre.adopters.iter().copied().zip(mu.iter().copied()).collect(),
    };
    Ok(FitResult {
        spec,
        params,
        loglik: ll,
        trace,
        iterations,
        converged,
        events: pre.len(),
    })
}

/// Value, gradient and Hessian of the θ-block objective
/// h(θ) = Σ_n ln(μ_n + θ·S_n) − θ·tail (the μ terms are constant here).
fn theta_derivatives(
    pre: &Precomputed,
    theta: &[f64; NUM_FEATURES],
    mu: &[f64],
) -> ([f64; NUM_FEATURES], [[f64; NUM_FEATURES]; NUM_FEATURES]) {
    let n_events = pre.len();
    let chunks = n_events.div_ceil(CHUNK);
    type Acc = ([f64; NUM_FEATURES], [[f64; NUM_FEATURES]; NUM_FEATURES]);
    let partials: Vec<Acc> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut g = [0.0; NUM_FEATURES];
            let mut h = [[0.0; NUM_FEATURES]; NUM_FEATURES];
            for n in c * CHUNK..((c + 1) * CHUNK).min(n_events) {
                let s = &pre.excitation[n];
                let inv = 1.0 / pre.lambda(n, theta, mu);
                for i in 0..NUM_FEATURES {
                    if s[i] == 0.0 {
                        continue;
                    }
                    g[i] += s[i] * inv;
                    for j in 0..NUM_FEATURES {
                        h[i][j] -= s[i] * s[j] * inv * inv;
                    }
                }
            }
            (g, h)
        })
        .collect();
    let mut g = [0.0; NUM_FEATURES];
    let mut h = [[0.0; NUM_FEATURES]; NUM_FEATURES];
    for (pg, ph) in &partials {
        for i in 0..NUM_FEATURES {
            g[i] += pg[i];
            for j in 0..NUM_FEATURES {
                h[i][j] += ph[i][j];
            }
        }
    }
    for i in 0..NUM_FEATURES {
        g[i] -= pre.tail[i];
    }
    (g, h)
}

/// Solves `a x = b` for a small symmetric positive definite `a` by Cholesky.
fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    Some(x)
}

/// Projected Newton ascent on θ with μ held fixed. Returns the best point
/// found and its full objective value.
fn theta_block(
    pre: &Precomputed,
    mut theta: [f64; NUM_FEATURES],
    mu: &[f64],
    free: &[bool; NUM_FEATURES],
    mut value: f64,
    tol: f64,
) -> ([f64; NUM_FEATURES], f64) {
    let mu_total: f64 = mu.iter().sum();
    let eval = |t: &[f64; NUM_FEATURES]| pre.evaluate(t, mu, mu_total);
    const ARMIJO: f64 = 1e-4;

    for _ in 0..100 {
        let (g, h) = theta_derivatives(pre, &theta, mu);
        // Coordinates held at the bound with an outward gradient stay fixed.
        let active: Vec<usize> = (0..NUM_FEATURES)
            .filter(|&d| free[d] && (theta[d] > 0.0 || g[d] > 0.0))
            .collect();
        if active.is_empty() {
            break;
        }

        // ε-active set: coordinates within ε of zero whose gradient points
        // outward take a diagonally scaled projected step; the rest take a
        // Newton step on the reduced Hessian. Mixing them in one Newton system
        // lets the projection stall progress on the interior coordinates.
        let residual = active
            .iter()
            .map(|&d| ((theta[d] + g[d]).max(0.0) - theta[d]).powi(2))
            .sum::<f64>()
            .sqrt();
        let eps = residual.min(1e-3);
        let scale = active.iter().map(|&i| -h[i][i]).fold(0.0, f64::max).max(1e-300);
        let curvature = |d: usize| (-h[d][d]).max(1e-12 * scale);
        let binding: Vec<bool> = active.iter().map(|&d| theta[d] <= eps && g[d] < 0.0).collect();
        let interior: Vec<usize> = active
            .iter()
            .zip(&binding)
            .filter(|(_, &b)| !b)
            .map(|(&d, _)| d)
            .collect();

        let neg_h: Vec<Vec<f64>> = interior
            .iter()
            .map(|&i| interior.iter().map(|&j| -h[i][j]).collect())
            .collect();
        let rhs: Vec<f64> = interior.iter().map(|&i| g[i]).collect();
        let reduced = if interior.is_empty() {
            Some(Vec::new())
        } else {
            solve_spd(&neg_h, &rhs).or_else(|| {
                let ridged: Vec<Vec<f64>> = neg_h
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(j, &v)| if i == j { v + 1e-8 * scale } else { v })
                            .collect()
                    })
                    .collect();
                solve_spd(&ridged, &rhs)
            })
        };
        let newton = reduced.map(|x| {
            let mut it = x.into_iter();
            active
                .iter()
                .zip(&binding)
                .map(|(&d, &b)| {
                    if b {
                        g[d] / curvature(d)
                    } else {
                        it.next().expect("one per interior")
                    }
                })
                .collect::<Vec<f64>>()
        });
        let gradient_dir: Vec<f64> = active.iter().map(|&d| g[d] / curvature(d)).collect();

        let mut accepted = None;
        for dir in newton.iter().chain(std::iter::once(&gradient_dir)) {
            let mut step = 1.0;
            for _ in 0..60 {
                let mut cand = theta;
                for (k, &d) in active.iter().enumerate() {
                    cand[d] = (theta[d] + step * dir[k]).max(0.0);
                }
                let v = eval(&cand);
                let predicted: f64 = active.iter().map(|&d| g[d] * (cand[d] - theta[d])).sum();
                if v.is_finite() && v >= value + ARMIJO * predicted && v >= value {
                    accepted = Some((cand, v));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }

        let Some((cand, v)) = accepted else { break };
        let gain = v - value;
        let moved = cand != theta;
        theta = cand;
        value = v;
        if !moved || gain < 1e-3 * tol {
            break;
        }
    }
    (theta, value)
}

/// Exact per-user maximization of the base intensities for fixed θ.
fn mu_block(pre: &Precomputed, theta: &[f64; NUM_FEATURES], mu: &[f64]) -> Vec<f64> {
    let horizon = pre.horizon;
    pre.events_of
        .par_iter()
        .zip(mu.par_iter())
        .map(|(evs, &current)| {
            let excitation: Vec<f64> = evs.iter().map(|&n| dot(theta, &pre.excitation[n as usize])).collect();
            solve_base_intensity(&excitation, horizon, current)
        })
        .collect()
}

/// Maximizer over μ ≥ 0 of Σ ln(μ + e_n) − T μ.
pub(crate) fn solve_base_intensity(excitation: &[f64], horizon: f64, start: f64) -> f64 {
    let score = |m: f64| -> (f64, f64) {
        let mut d1 = -horizon;
        let mut d2 = 0.0;
        for &e in excitation {
            let inv = 1.0 / (m + e);
            d1 += inv;
            d2 -= inv * inv;
        }
        (d1, d2)
    };
    if excitation.iter().all(|&e| e > 0.0) && score(0.0).0 <= 0.0 {
        return 0.0;
    }
    // The derivative is positive at 0 and non-positive at N/T.
    let (mut lo, mut hi) = (0.0, excitation.len() as f64 / horizon);
    let mut x = if start > lo && start < hi { start } else { 0.5 * hi };
    for _ in 0..200 {
        let (d1, d2) = score(x);
        if d1 == 0.0 {
            break;
        }
        if d1 > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - d1 / d2;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let done = (next - x).abs() <= 1e-15 * x;
        x = next;
        if done {
            break;
        }
    }
    x
}
