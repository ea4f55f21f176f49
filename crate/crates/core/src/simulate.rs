//! Ground-truth generators: Hawkes cascades by thinning, threshold-style
//! contagion cascades, and synthetic social graphs.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::cascade::{quantize_hours, Cascade, Event};
use crate::error::{Error, Result};
use crate::features::{aggregate_feature, feature_vector, FeatureContext, NUM_FEATURES};
use crate::graph::{SocialGraph, UserId};
use crate::hawkes::{Kernel, Params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub word: String,
    pub params: Params,
    pub kernel: Kernel,
    pub horizon: f64,
    pub seed: u64,
    /// Largest admissible spectral radius of the branching matrix α/γ.
    pub max_branching: f64,
    /// Abort once this many events have been generated.
    pub max_events: usize,
}

impl SimConfig {
    pub fn new(params: Params, horizon: f64, seed: u64) -> Self {
        Self {
            word: "sim".into(),
            params,
            kernel: Kernel::untruncated(1.0),
            horizon,
            seed,
            max_branching: 0.99,
            max_events: 5_000_000,
        }
    }
}

/// Base intensity `rate` for every user of `graph`.
pub fn uniform_base(graph: &SocialGraph, rate: f64) -> BTreeMap<UserId, f64> {
    graph.users().map(|u| (u, rate)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branching {
    /// Upper bound on the spectral radius of α/γ from the Collatz-Wielandt
    /// ratio after power iteration; tight at convergence.
    pub spectral_radius: f64,
    /// Largest total incoming influence Σ_m α_{m→m'} / γ over recipients.
    pub max_row_sum: f64,
}

/// Outgoing influence lists `(recipient, α)` per sender, self included.
fn outgoing_alpha(graph: &SocialGraph, ctx: &FeatureContext, theta: &[f64; NUM_FEATURES]) -> Vec<Vec<(UserId, f64)>> {
    let p = Params::new(*theta, BTreeMap::new());
    graph
        .users()
        .map(|m| {
            std::iter::once(m)
                .chain(graph.neighbors(m).iter().map(|n| n.user))
                .map(|r| (r, p.alpha(feature_vector(graph, ctx, m, r))))
                .filter(|&(_, a)| a > 0.0)
                .collect()
        })
        .collect()
}

pub fn branching(graph: &SocialGraph, ctx: &FeatureContext, theta: &[f64; NUM_FEATURES], decay: f64) -> Branching {
    let out = outgoing_alpha(graph, ctx, theta);
    let n = graph.len();
    let mut row = vec![0.0; n];
    for list in &out {
        for &(r, a) in list {
            row[r.index()] += a / decay;
        }
    }
    let max_row_sum = row.iter().copied().fold(0.0, f64::max);

    // Power iteration on (B + I) keeps the iteration aperiodic; for a positive
    // vector x, max_i ((B + I)x)_i / x_i bounds ρ(B) + 1 from above.
    let mut x = vec![1.0; n];
    let mut bound = f64::INFINITY;
    for _ in 0..2000 {
        let mut y = x.clone();
        for (m, list) in out.iter().enumerate() {
            for &(r, a) in list {
                y[r.index()] += x[m] * a / decay;
            }
        }
        let ratio = y.iter().zip(&x).map(|(a, b)| a / b).fold(0.0, f64::max);
        let norm = y.iter().copied().fold(0.0, f64::max);
        y.iter_mut().for_each(|v| *v = (*v / norm).max(1e-300));
        x = y;
        let converged = (bound - ratio).abs() < 1e-10;
        bound = bound.min(ratio);
        if converged {
            break;
        }
    }
    let spectral_radius = if n == 0 { 0.0 } else { (bound - 1.0).max(0.0) };
    Branching {
        spectral_radius,
        max_row_sum,
    }
}

/// Binary indexed tree over non-negative weights with prefix search.
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0.0; n + 1] }
    }

    fn add(&mut self, i: usize, delta: f64) {
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`.
    fn find(&self, mut target: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n.saturating_sub(1))
    }
}

/// Samples a cascade from the parametric Hawkes process by thinning.
///
/// The total intensity only decays between events, so its value just after
/// the current time bounds it until the next event. Accepted points are
/// attributed to a user with probability proportional to that user's
/// intensity, either through the base rates or through a triggering sender
/// chosen by its current excitation.
pub fn simulate(graph: &SocialGraph, ctx: &FeatureContext, cfg: &SimConfig) -> Result<Cascade> {
    if !cfg.params.is_feasible() {
        return Err(Error::InvalidArgument("parameters must be non-negative".into()));
    }
    if !(cfg.horizon >= 0.0 && cfg.horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad horizon {}", cfg.horizon)));
    }
    let decay = cfg.kernel.decay;
    let b = branching(graph, ctx, &cfg.params.theta, decay);
    if b.spectral_radius > cfg.max_branching {
        return Err(Error::Unstable {
            ratio: b.spectral_radius,
            limit: cfg.max_branching,
        });
    }

    let n = graph.len();
    let out = outgoing_alpha(graph, ctx, &cfg.params.theta);
    let out_weight: Vec<f64> = out.iter().map(|l| l.iter().map(|x| x.1).sum()).collect();
    let mut base_cum = Vec::with_capacity(n);
    let mut mu_total = 0.0;
    for u in graph.users() {
        mu_total += cfg.params.mu_of(u);
        base_cum.push(mu_total);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut fen = Fenwick::new(n);
    let mut excitation = vec![0.0; n];
    let mut fen_total = 0.0;
    let mut t_ref = 0.0;
    let mut t = 0.0;
    let mut events = Vec::new();

    loop {
        let bound = mu_total + (-decay * (t - t_ref)).exp() * fen_total;
        if !(bound > 0.0) {
            break;
        }
        let wait: f64 = Exp::new(bound).expect("positive rate").sample(&mut rng);
        let s = t + wait;
        if s > cfg.horizon {
            break;
        }
        t = s;
        let decay_now = (-decay * (s - t_ref)).exp();
        let lambda = mu_total + decay_now * fen_total;
        if rng.random::<f64>() * bound > lambda {
            continue;
        }

        let pick = rng.random::<f64>() * lambda;
        let user = if pick < mu_total {
            base_cum.partition_point(|&c| c <= pick).min(n - 1)
        } else {
            let sender = fen.find((pick - mu_total) / decay_now);
            let list = &out[sender];
            let mut r = rng.random::<f64>() * out_weight[sender];
            let mut chosen = list.last().map(|x| x.0.index()).unwrap_or(sender);
            for &(u, a) in list {
                if r < a {
                    chosen = u.index();
                    break;
                }
                r -= a;
            }
            chosen
        };
        events.push(Event {
            user: UserId(user as u32),
            time: quantize_hours(s).min(cfg.horizon),
        });
        if events.len() > cfg.max_events {
            return Err(Error::InvalidArgument(format!(
                "simulation exceeded {} events",
                cfg.max_events
            )));
        }

        let mut w = (decay * (s - t_ref)).exp();
        if w > 1e150 {
            // Rebase the scaled excitations to the current time.
            let shrink = 1.0 / w;
            fen = Fenwick::new(n);
            fen_total = 0.0;
            for (m, e) in excitation.iter_mut().enumerate() {
                *e *= shrink;
                if *e > 0.0 && out_weight[m] > 0.0 {
                    fen.add(m, out_weight[m] * *e);
                    fen_total += out_weight[m] * *e;
                }
            }
            t_ref = s;
            w = 1.0;
        }
        excitation[user] += w;
        if out_weight[user] > 0.0 {
            fen.add(user, out_weight[user] * w);
            fen_total += out_weight[user] * w;
        }
    }

    let mut cascade = Cascade::new(cfg.word.clone(), events, cfg.horizon)?;
    cascade.origin_ns = 0;
    Ok(cascade)
}

/// Compensator increments of the pooled process between successive events
/// (starting from 0). Under the generating parameters these are i.i.d.
/// Exponential(1).
pub fn rescaled_intervals(
    graph: &SocialGraph,
    ctx: &FeatureContext,
    cascade: &Cascade,
    params: &Params,
    kernel: &Kernel,
) -> Vec<f64> {
    let mu_total: f64 = params.mu.values().sum();
    let out_weight: Vec<f64> = graph
        .users()
        .map(|m| {
            let agg = aggregate_feature(graph, ctx, m).map(f64::from);
            params.theta.iter().zip(&agg).map(|(a, b)| a * b).sum()
        })
        .collect();
    let mut excitation = 0.0;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(cascade.len());
    for e in &cascade.events {
        let dt = e.time - prev;
        out.push(mu_total * dt + excitation * kernel.mass(dt));
        excitation = excitation * kernel.value(dt) + out_weight[e.user.index()];
        prev = e.time;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ContagionMode {
    /// Every exposure converts with the same probability.
    Simple { prob: f64 },
    /// Each further exposure multiplies the conversion probability by
    /// `boost` until the `threshold`-th, after which it stays at
    /// `prob · boost^(threshold − 1)` (capped at 1).
    ComplexThreshold { prob: f64, boost: f64, threshold: usize },
}

impl ContagionMode {
    pub fn conversion_prob(&self, k: usize) -> f64 {
        match *self {
            ContagionMode::Simple { prob } => prob,
            ContagionMode::ComplexThreshold { prob, boost, threshold } => {
                let steps = k.clamp(1, threshold.max(1)) - 1;
                (prob * boost.powi(steps as i32)).min(1.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContagionConfig {
    pub word: String,
    pub mode: ContagionMode,
    /// Spontaneous adoption rate per user, per hour.
    pub background_rate: f64,
    /// Rate of the exponential delay between a converting exposure and adoption.
    pub delay_rate: f64,
    pub horizon: f64,
    pub seed: u64,
}

/// Single-adoption cascade in which each new adopter exposes its
/// not-yet-adopted neighbors, and each exposure may trigger a delayed adoption.
pub fn simulate_contagion(graph: &SocialGraph, cfg: &ContagionConfig) -> Result<Cascade> {
    if !(cfg.background_rate >= 0.0 && cfg.delay_rate > 0.0 && cfg.horizon > 0.0) {
        return Err(Error::InvalidArgument("bad contagion rates or horizon".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let delay = Exp::new(cfg.delay_rate).expect("positive rate");
    let mut queue: BinaryHeap<Reverse<(u64, u32)>> = BinaryHeap::new();
    if cfg.background_rate > 0.0 {
        let bg = Exp::new(cfg.background_rate).expect("positive rate");
        for u in graph.users() {
            let t: f64 = bg.sample(&mut rng);
            if t <= cfg.horizon {
                queue.push(Reverse((t.to_bits(), u.0)));
            }
        }
    }
    let mut adopted = vec![false; graph.len()];
    let mut exposed = vec![0usize; graph.len()];
    let mut events = Vec::new();
    while let Some(Reverse((bits, u))) = queue.pop() {
        let user = UserId(u);
        if adopted[user.index()] {
            continue;
        }
        adopted[user.index()] = true;
        let t = f64::from_bits(bits);
        events.push(Event {
            user,
            time: quantize_hours(t).min(cfg.horizon),
        });
        for nb in graph.neighbors(user) {
            let j = nb.user.index();
            if adopted[j] {
                continue;
            }
            exposed[j] += 1;
            if rng.random::<f64>() < cfg.mode.conversion_prob(exposed[j]) {
                let when = t + delay.sample(&mut rng);
                if when <= cfg.horizon {
                    queue.push(Reverse((when.to_bits(), nb.user.0)));
                }
            }
        }
    }
    let mut c = Cascade::new(cfg.word.clone(), events, cfg.horizon)?;
    c.origin_ns = 0;
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphKind {
    ErdosRenyi {
        n: usize,
        p: f64,
    },
    /// Users spread evenly over `cities` tracked cities; edges form with
    /// probability `p_in` inside a city and `p_out` across cities.
    PlantedCities {
        n: usize,
        cities: usize,
        p_in: f64,
        p_out: f64,
    },
    /// `cores` disjoint cliques of `core_size` users. Every core member but
    /// the last gets `pendants` leaf neighbors, so the edges between pendant
    /// holders are the most embedded. Core member `i` lives in city `i`, so
    /// clique edges are never local; each leaf shares its hub's city with
    /// probability `locality` and otherwise lives in the next city.
    EmbeddedCore {
        cores: usize,
        core_size: usize,
        pendants: usize,
        locality: f64,
    },
}

pub fn city_label(i: usize) -> String {
    format!("city{i}")
}

pub fn synth_graph(kind: GraphKind, seed: u64) -> Result<SocialGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
    match kind {
        GraphKind::ErdosRenyi { n, p } => {
            if !prob_ok(p) {
                return Err(Error::InvalidArgument(format!("edge probability {p}")));
            }
            let mut g = SocialGraph::with_users(n);
            for a in 0..n as u32 {
                for b in a + 1..n as u32 {
                    if p > 0.0 && rng.random::<f64>() < p {
                        g.add_edge(UserId(a), UserId(b), None)?;
                    }
                }
            }
            Ok(g)
        }
        GraphKind::PlantedCities { n, cities, p_in, p_out } => {
            if cities == 0 || !prob_ok(p_in) || !prob_ok(p_out) {
                return Err(Error::InvalidArgument("bad planted-cities parameters".into()));
            }
            let mut g = SocialGraph::with_users(n);
            let labels: Vec<String> = (0..cities).map(city_label).collect();
            for u in g.users().collect::<Vec<_>>() {
                g.set_city(u, &labels[u.index() % cities]);
            }
            g.set_tracked_cities(&labels);
            for a in 0..n {
                for b in a + 1..n {
                    let p = if a % cities == b % cities { p_in } else { p_out };
                    if p > 0.0 && rng.random::<f64>() < p {
                        g.add_edge(UserId(a as u32), UserId(b as u32), None)?;
                    }
                }
            }
            Ok(g)
        }
        GraphKind::EmbeddedCore {
            cores,
            core_size,
            pendants,
            locality,
        } => {
            if core_size < 2 || !prob_ok(locality) {
                return Err(Error::InvalidArgument("bad embedded-core parameters".into()));
            }
            let mut g = SocialGraph::new();
            let labels: Vec<String> = (0..core_size).map(city_label).collect();
            let mut next = 0usize;
            let mut fresh = |g: &mut SocialGraph, city: usize| {
                let id = g.ensure_user(&next.to_string());
                g.set_city(id, &labels[city]);
                next += 1;
                id
            };
            for _ in 0..cores {
                let members: Vec<UserId> = (0..core_size).map(|i| fresh(&mut g, i)).collect();
                for (i, &a) in members.iter().enumerate() {
                    for &b in &members[i + 1..] {
                        g.add_edge(a, b, None)?;
                    }
                }
                for (i, &hub) in members[..core_size - 1].iter().enumerate() {
                    for _ in 0..pendants {
                        let city = if rng.random::<f64>() < locality {
                            i
                        } else {
                            (i + 1) % core_size
                        };
                        let leaf = fresh(&mut g, city);
                        g.add_edge(hub, leaf, None)?;
                    }
                }
            }
            g.set_tracked_cities(&labels);
            Ok(g)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{adamic_adar, geo_assortativity};

    #[test]
    fn empty_er_graph() {
        let g = synth_graph(GraphKind::ErdosRenyi { n: 100, p: 0.0 }, 1).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g.edge_count(), 0);
        assert!(synth_graph(GraphKind::ErdosRenyi { n: 3, p: 1.5 }, 1).is_err());
    }

    #[test]
    fn within_city_edges_only() {
        let kind = GraphKind::PlantedCities {
            n: 80,
            cities: 4,
            p_in: 0.3,
            p_out: 0.0,
        };
        let g = synth_graph(kind, 2).unwrap();
        assert!(g.edge_count() > 0);
        assert_eq!(geo_assortativity(&g).unwrap(), 1.0);
    }

    #[test]
    fn clique_dyads_more_embedded_than_periphery() {
        let kind = GraphKind::EmbeddedCore {
            cores: 1,
            core_size: 10,
            pendants: 3,
            locality: 0.5,
        };
        let g = synth_graph(kind, 3).unwrap();
        let core: Vec<UserId> = (0..10).map(UserId).collect();
        let mut min_core = f64::INFINITY;
        let mut max_periphery = f64::NEG_INFINITY;
        for (a, b, _) in g.edges() {
            let aa = adamic_adar(&g, a, b).unwrap();
            if core.contains(&a) && core.contains(&b) {
                min_core = min_core.min(aa);
            } else {
                max_periphery = max_periphery.max(aa);
            }
        }
        assert!(min_core > max_periphery, "{min_core} vs {max_periphery}");
    }

    #[test]
    fn fenwick_search() {
        let mut f = Fenwick::new(5);
        for (i, w) in [1.0, 0.0, 2.0, 0.5, 1.5].iter().enumerate() {
            f.add(i, *w);
        }
        assert_eq!(f.find(0.5), 0);
        assert_eq!(f.find(1.0), 2);
        assert_eq!(f.find(2.99), 2);
        assert_eq!(f.find(3.2), 3);
        assert_eq!(f.find(4.9), 4);
    }

    #[test]
    fn branching_of_self_excitation() {
        let g = SocialGraph::with_users(3);
        let ctx = FeatureContext::all_users(&g, 90.0).unwrap();
        let b = branching(&g, &ctx, &[0.5, 0.0, 0.0, 0.0], 2.0);
        assert!((b.spectral_radius - 0.25).abs() < 1e-9);
        assert!((b.max_row_sum - 0.25).abs() < 1e-15);
    }

    #[test]
    fn branching_of_star() {
        // Star with 4 leaves, F2 weight 0.2: ρ = 0.2·√4 = 0.4 without self terms.
        let mut g = SocialGraph::with_users(5);
        for leaf in 1..5 {
            g.add_edge(UserId(0), UserId(leaf), None).unwrap();
        }
        let ctx = FeatureContext::all_users(&g, 90.0).unwrap();
        let b = branching(&g, &ctx, &[0.0, 0.2, 0.0, 0.0], 1.0);
        assert!((b.spectral_radius - 0.4).abs() < 1e-8, "{}", b.spectral_radius);
        assert!((b.max_row_sum - 0.8).abs() < 1e-12);
    }

    #[test]
    fn unstable_config_rejected() {
        let g = SocialGraph::with_users(1);
        let ctx = FeatureContext::all_users(&g, 90.0).unwrap();
        let params = Params::new([1.5, 0.0, 0.0, 0.0], uniform_base(&g, 1.0));
        let err = simulate(&g, &ctx, &SimConfig::new(params, 10.0, 1)).unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }));
    }

    #[test]
    fn replay_is_bit_identical() {
        let g = synth_graph(GraphKind::ErdosRenyi { n: 50, p: 0.05 }, 4).unwrap();
        let ctx = FeatureContext::all_users(&g, 90.0).unwrap();
        let params = Params::new([0.3, 0.1, 0.0, 0.0], uniform_base(&g, 0.05));
        let cfg = SimConfig::new(params, 50.0, 17);
        let a = simulate(&g, &ctx, &cfg).unwrap();
        let b = simulate(&g, &ctx, &cfg).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn contagion_modes() {
        let simple = ContagionMode::Simple { prob: 0.1 };
        assert_eq!(simple.conversion_prob(1), 0.1);
        assert_eq!(simple.conversion_prob(5), 0.1);
        let complex = ContagionMode::ComplexThreshold {
            prob: 0.1,
            boost: 3.0,
            threshold: 2,
        };
        assert_eq!(complex.conversion_prob(1), 0.1);
        assert!((complex.conversion_prob(2) - 0.3).abs() < 1e-15);
        assert!((complex.conversion_prob(7) - 0.3).abs() < 1e-15);
        let capped = ContagionMode::ComplexThreshold {
            prob: 0.2,
            boost: 3.0,
            threshold: 3,
        };
        assert!((capped.conversion_prob(2) - 0.6).abs() < 1e-15);
        assert_eq!(capped.conversion_prob(3), 1.0);
        assert_eq!(capped.conversion_prob(9), 1.0);
    }
}
