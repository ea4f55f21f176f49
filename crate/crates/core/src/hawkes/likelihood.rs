use crate::cascade::Cascade;
use crate::error::{Error, Result};
use crate::features::{feature_vector, FeatureContext};
use crate::graph::{SocialGraph, UserId};

use super::{Kernel, Params};

/// λ_user(t), summing over events strictly before `t`. Never truncated.
pub fn intensity(
    graph: &SocialGraph,
    ctx: &FeatureContext,
    cascade: &Cascade,
    params: &Params,
    kernel: &Kernel,
    user: UserId,
    t: f64,
) -> f64 {
    let mut lambda = params.mu_of(user);
    for e in cascade.events.iter().take_while(|e| e.time < t) {
        let alpha = params.alpha(feature_vector(graph, ctx, e.user, user));
        if alpha != 0.0 {
            lambda += alpha * kernel.value(t - e.time);
        }
    }
    lambda
}

/// ∫_{t1}^{t2} λ_user(t) dt in closed form. `t2` may be infinite.
#[allow(clippy::too_many_arguments)]
pub fn intensity_integral(
    graph: &SocialGraph,
    ctx: &FeatureContext,
    cascade: &Cascade,
    params: &Params,
    kernel: &Kernel,
    user: UserId,
    t1: f64,
    t2: f64,
) -> Result<f64> {
    if !(t2 >= t1) || t1 < 0.0 {
        return Err(Error::InvalidArgument(format!("bad window [{t1}, {t2}]")));
    }
    let mu = params.mu_of(user);
    let mut total = if mu > 0.0 { mu * (t2 - t1) } else { 0.0 };
    for e in cascade.events.iter().take_while(|e| e.time < t2) {
        let alpha = params.alpha(feature_vector(graph, ctx, e.user, user));
        if alpha == 0.0 {
            continue;
        }
        let start = (t1 - e.time).max(0.0);
        let span = kernel.value(start) - kernel.value(t2 - e.time);
        total += alpha * span / kernel.decay;
    }
    Ok(total)
}

/// Reference log-likelihood over `[0, T]`: direct double sum for the event
/// term, closed-form integrals for every user in the graph. Ignores
/// truncation. Returns −∞ if some event has zero intensity.
pub fn loglik_naive(
    graph: &SocialGraph,
    ctx: &FeatureContext,
    cascade: &Cascade,
    params: &Params,
    kernel: &Kernel,
) -> f64 {
    let exact = Kernel::untruncated(kernel.decay);
    let mut log_term = 0.0;
    for e in &cascade.events {
        log_term += intensity(graph, ctx, cascade, params, &exact, e.user, e.time).ln();
    }
    let t = cascade.horizon;
    let mut integral = 0.0;
    for m in graph.users() {
        integral += intensity_integral(graph, ctx, cascade, params, &exact, m, 0.0, t).expect("valid window");
    }
    // Base intensities assigned to users outside the graph still integrate.
    for (&u, &mu) in &params.mu {
        if !graph.contains(u) {
            integral += mu * t;
        }
    }
    log_term - integral
}
