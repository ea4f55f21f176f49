#![allow(dead_code, clippy::too_many_arguments)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordflow::cascade::{Cascade, Event};
use wordflow::features::FeatureContext;
use wordflow::graph::{SocialGraph, UserId};
use wordflow::hawkes::Params;

pub struct Instance {
    pub graph: SocialGraph,
    pub cascade: Cascade,
    pub ctx: FeatureContext,
    pub params: Params,
}

/// Random graph with city labels, random event times and random strictly
/// positive parameters for every user.
pub fn random_instance(seed: u64, max_users: usize, max_events: usize, horizon: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=max_users);
    let mut g = SocialGraph::with_users(m);
    let p = rng.random_range(0.1..0.5);
    for a in 0..m as u32 {
        for b in a + 1..m as u32 {
            if rng.random::<f64>() < p {
                g.add_edge(UserId(a), UserId(b), None).unwrap();
            }
        }
    }
    let cities = ["a", "b", "c"];
    for u in 0..m as u32 {
        g.set_city(UserId(u), cities[rng.random_range(0..cities.len())]);
    }
    g.set_tracked_cities(&["a", "b"]);

    let n = rng.random_range(1..=max_events);
    let events = (0..n)
        .map(|_| Event {
            user: UserId(rng.random_range(0..m as u32)),
            time: rng.random_range(0.0..horizon),
        })
        .collect();
    let cascade = Cascade::new("w", events, horizon).unwrap();
    let ctx = FeatureContext::for_cascade(&g, &cascade, 90.0).unwrap();
    let theta = [
        rng.random_range(0.05..1.0),
        rng.random_range(0.05..1.0),
        rng.random_range(0.05..1.0),
        rng.random_range(0.05..1.0),
    ];
    let mu: BTreeMap<UserId, f64> = g.users().map(|u| (u, rng.random_range(0.01..1.0))).collect();
    Instance {
        graph: g,
        cascade,
        ctx,
        params: Params::new(theta, mu),
    }
}

/// Adaptive Simpson quadrature.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Integrates a piecewise-smooth function whose kinks are at `breaks`.
pub fn simpson_piecewise<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut points: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&t| t > a && t < b))
        .chain(std::iter::once(b))
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    points.windows(2).map(|w| simpson(f, w[0], w[1], tol)).sum()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
