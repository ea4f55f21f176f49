use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::cascade::Cascade;
use crate::error::{Error, Result};
use crate::features::{
    aggregate_feature, enumerate_configs, feature_vector, FeatureContext, FeatureSet, ModelSpec, NUM_FEATURES,
};
use crate::graph::{SocialGraph, UserId};

use super::{dot, Kernel, Params};

/// Reductions run over fixed-size chunks and are summed in chunk order, so
/// results are bitwise independent of the number of worker threads.
pub(crate) const CHUNK: usize = 1024;

pub(crate) fn ordered_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(std::ops::Range<usize>) -> f64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect();
    partials.iter().sum()
}

/// Per-event, per-configuration kernel sums `R_c(n) = Σ κ(t_n − t_j)` over
/// earlier events `j` whose dyad into the recipient of `n` has configuration `c`.
#[derive(Debug, Clone)]
pub struct RecursiveMessages {
    /// Non-empty realizable configurations; the column order of `values`.
    pub configs: Vec<FeatureSet>,
    values: Vec<f64>,
}

impl RecursiveMessages {
    pub fn get(&self, event: usize, config: usize) -> f64 {
        self.values[event * self.configs.len() + config]
    }

    pub fn row(&self, event: usize) -> &[f64] {
        let c = self.configs.len();
        &self.values[event * c..(event + 1) * c]
    }
}

/// Everything about a cascade that does not depend on the parameters.
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub kernel: Kernel,
    pub horizon: f64,
    /// Users with at least one event, ascending.
    pub adopters: Vec<UserId>,
    adopter_index: HashMap<UserId, usize>,
    /// Adopter slot of each event's user.
    pub event_adopter: Vec<u32>,
    /// Event indices per adopter slot.
    pub events_of: Vec<Vec<u32>>,
    pub messages: RecursiveMessages,
    /// Σ_c R_c(n) f_c: the feature-weighted excitation felt by event `n`.
    pub excitation: Vec<[f64; NUM_FEATURES]>,
    /// f(m → ★) per adopter slot.
    pub aggregate: Vec<[f64; NUM_FEATURES]>,
    /// Σ_m f(m → ★) Σ_{n: m_n = m} (1 − κ(T − t_n)) / γ, with κ truncated.
    pub tail: [f64; NUM_FEATURES],
}

#[derive(Clone, Copy)]
struct Source {
    time: f64,
    config: usize,
}

impl Precomputed {
    pub fn new(graph: &SocialGraph, ctx: &FeatureContext, cascade: &Cascade, kernel: Kernel) -> Result<Self> {
        let adopters = cascade.adopters();
        if let Some(bad) = adopters.iter().find(|u| !graph.contains(**u)) {
            return Err(Error::UnknownUser(bad.to_string()));
        }
        let adopter_index: HashMap<UserId, usize> = adopters.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let event_adopter: Vec<u32> = cascade.events.iter().map(|e| adopter_index[&e.user] as u32).collect();
        let mut events_of = vec![Vec::new(); adopters.len()];
        for (n, &a) in event_adopter.iter().enumerate() {
            events_of[a as usize].push(n as u32);
        }

        let configs: Vec<FeatureSet> = enumerate_configs(ModelSpec::full())
            .into_iter()
            .filter(|c| !c.is_empty())
            .collect();
        let config_slot: HashMap<FeatureSet, usize> = configs.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let n_configs = configs.len();

        let cutoff = kernel.cutoff();
        let per_recipient: Vec<Vec<(u32, Vec<f64>)>> = (0..adopters.len())
            .into_par_iter()
            .map(|slot| {
                let recipient = adopters[slot];
                let mut sources: Vec<Source> = Vec::new();
                let mut push_from = |sender: UserId| {
                    let f = feature_vector(graph, ctx, sender, recipient);
                    if let (Some(&s), Some(&config)) = (adopter_index.get(&sender), config_slot.get(&f)) {
                        sources.extend(events_of[s].iter().map(|&n| Source {
                            time: cascade.events[n as usize].time,
                            config,
                        }));
                    }
                };
                push_from(recipient);
                for nb in graph.neighbors(recipient) {
                    push_from(nb.user);
                }
                sources.sort_by(|a, b| a.time.total_cmp(&b.time));

                let mut r = vec![0.0; n_configs];
                let mut live = vec![0usize; n_configs];
                let (mut added, mut expired) = (0usize, 0usize);
                let mut last: Option<f64> = None;
                let mut out = Vec::with_capacity(events_of[slot].len());
                for &n in &events_of[slot] {
                    let t = cascade.events[n as usize].time;
                    if let Some(prev) = last {
                        let decay = kernel.value(t - prev);
                        r.iter_mut().for_each(|x| *x *= decay);
                    }
                    while expired < added && t - sources[expired].time >= cutoff {
                        let s = sources[expired];
                        r[s.config] -= kernel.value(t - s.time);
                        live[s.config] -= 1;
                        expired += 1;
                    }
                    while added < sources.len() && sources[added].time < t {
                        let s = sources[added];
                        added += 1;
                        if t - s.time >= cutoff {
                            expired = added;
                            continue;
                        }
                        r[s.config] += kernel.value(t - s.time);
                        live[s.config] += 1;
                    }
                    for (x, &l) in r.iter_mut().zip(&live) {
                        if l == 0 {
                            *x = 0.0;
                        }
                    }
                    out.push((n, r.clone()));
                    last = Some(t);
                }
                out
            })
            .collect();

        let n_events = cascade.len();
        let mut values = vec![0.0; n_events * n_configs];
        for rows in per_recipient {
            for (n, row) in rows {
                let n = n as usize;
                values[n * n_configs..(n + 1) * n_configs].copy_from_slice(&row);
            }
        }
        let config_vectors: Vec<[f64; NUM_FEATURES]> = configs.iter().map(|c| c.as_array()).collect();
        let excitation: Vec<[f64; NUM_FEATURES]> = (0..n_events)
            .map(|n| {
                let mut s = [0.0; NUM_FEATURES];
                for (c, fv) in config_vectors.iter().enumerate() {
                    let rc = values[n * n_configs + c];
                    for d in 0..NUM_FEATURES {
                        s[d] += rc * fv[d];
                    }
                }
                s
            })
            .collect();

        let aggregate: Vec<[f64; NUM_FEATURES]> = adopters
            .iter()
            .map(|&m| aggregate_feature(graph, ctx, m).map(f64::from))
            .collect();
        let horizon = cascade.horizon;
        let mut tail = [0.0; NUM_FEATURES];
        for (slot, evs) in events_of.iter().enumerate() {
            let mass: f64 = evs
                .iter()
                .map(|&n| (1.0 - kernel.truncated(horizon - cascade.events[n as usize].time)) / kernel.decay)
                .sum();
            for d in 0..NUM_FEATURES {
                tail[d] += aggregate[slot][d] * mass;
            }
        }

        Ok(Self {
            kernel,
            horizon,
            adopters,
            adopter_index,
            event_adopter,
            events_of,
            messages: RecursiveMessages { configs, values },
            excitation,
            aggregate,
            tail,
        })
    }

    pub fn len(&self) -> usize {
        self.event_adopter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_adopter.is_empty()
    }

    pub fn slot(&self, user: UserId) -> Option<usize> {
        self.adopter_index.get(&user).copied()
    }

    /// Whether feature `d` has any effect on the likelihood of this cascade.
    pub fn has_support(&self, d: usize) -> bool {
        self.tail[d] > 0.0 || self.excitation.iter().any(|s| s[d] > 0.0)
    }

    pub(crate) fn dense_mu(&self, params: &Params) -> Vec<f64> {
        self.adopters.iter().map(|&u| params.mu_of(u)).collect()
    }

    #[inline]
    pub(crate) fn lambda(&self, n: usize, theta: &[f64; NUM_FEATURES], mu: &[f64]) -> f64 {
        mu[self.event_adopter[n] as usize] + dot(theta, &self.excitation[n])
    }

    /// Σ_n ln λ(t_n) − T Σ μ − θ·tail, with `mu_total` covering any base
    /// intensities outside the adopter set.
    pub(crate) fn evaluate(&self, theta: &[f64; NUM_FEATURES], mu: &[f64], mu_total: f64) -> f64 {
        let log_term = ordered_sum(self.len(), |range| range.map(|n| self.lambda(n, theta, mu).ln()).sum());
        log_term - self.horizon * mu_total - dot(theta, &self.tail)
    }
}

/// Accelerated log-likelihood using the precomputed messages.
pub fn loglik_fast(pre: &Precomputed, params: &Params) -> f64 {
    let mu = pre.dense_mu(params);
    let total: f64 = params.mu.values().sum();
    pre.evaluate(&params.theta, &mu, total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub theta: [f64; NUM_FEATURES],
    /// ∂/∂μ for every adopter and every user with an entry in `Params::mu`.
    pub mu: BTreeMap<UserId, f64>,
}

pub fn grad(pre: &Precomputed, params: &Params) -> Gradient {
    let mu = pre.dense_mu(params);
    let n_events = pre.len();
    let chunks = n_events.div_ceil(CHUNK);
    let partials: Vec<[f64; NUM_FEATURES]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = [0.0; NUM_FEATURES];
            for n in c * CHUNK..((c + 1) * CHUNK).min(n_events) {
                let inv = 1.0 / pre.lambda(n, &params.theta, &mu);
                for d in 0..NUM_FEATURES {
                    acc[d] += pre.excitation[n][d] * inv;
                }
            }
            acc
        })
        .collect();
    let mut theta = [0.0; NUM_FEATURES];
    for p in &partials {
        for d in 0..NUM_FEATURES {
            theta[d] += p[d];
        }
    }
    for d in 0..NUM_FEATURES {
        theta[d] -= pre.tail[d];
    }

    let mut grad_mu: BTreeMap<UserId, f64> = params.mu.keys().map(|&u| (u, -pre.horizon)).collect();
    for (slot, evs) in pre.events_of.iter().enumerate() {
        let s: f64 = evs
            .iter()
            .map(|&n| 1.0 / pre.lambda(n as usize, &params.theta, &mu))
            .sum();
        grad_mu.insert(pre.adopters[slot], s - pre.horizon);
    }
    Gradient { theta, mu: grad_mu }
}
