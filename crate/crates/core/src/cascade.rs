//! Word cascades, exposure tracking and the shuffle test.
//!
//! A user is exposed to a word by a neighbor when the neighbor used the word
//! after the connection formed and before the user's own first use. Exposures
//! are bucketed by the number of distinct exposing neighbors (1, 2, 3+), and
//! each bucket's infection risk is compared against a null in which event
//! timestamps are randomly reassigned among the word's events.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{nearest_rank, SocialGraph, UserId};
use crate::tsv;

const NANOS_PER_HOUR: f64 = 3.6e12;
const NANOS_PER_SECOND: i64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub user: UserId,
    /// Hours since the cascade origin.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub word: String,
    /// Sorted by time; ties keep input order.
    pub events: Vec<Event>,
    /// End of the observation window, in hours.
    pub horizon: f64,
    /// Epoch nanoseconds corresponding to time zero.
    pub origin_ns: i64,
}

impl Cascade {
    pub fn new(word: impl Into<String>, mut events: Vec<Event>, horizon: f64) -> Result<Self> {
        if !horizon.is_finite() || horizon < 0.0 {
            return Err(Error::InvalidArgument(format!("bad horizon {horizon}")));
        }
        for e in &events {
            if !e.time.is_finite() || e.time < 0.0 || e.time > horizon {
                return Err(Error::InvalidArgument(format!(
                    "event time {} outside [0, {horizon}]",
                    e.time
                )));
            }
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(Self {
            word: word.into(),
            events,
            horizon,
            origin_ns: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    fn origin_hours(&self) -> f64 {
        self.origin_ns as f64 / NANOS_PER_HOUR
    }

    /// Event times per user, ascending. Indexed by `UserId`.
    pub fn times_by_user(&self, n_users: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); n_users];
        for e in &self.events {
            out[e.user.index()].push(e.time);
        }
        out
    }

    /// First-use time per user (the adoption time), indexed by `UserId`.
    pub fn adoption_times(&self, n_users: usize) -> Vec<Option<f64>> {
        let mut out = vec![None; n_users];
        for e in &self.events {
            out[e.user.index()].get_or_insert(e.time);
        }
        out
    }

    /// Distinct users with at least one event, ascending.
    pub fn adopters(&self) -> Vec<UserId> {
        let mut users: Vec<UserId> = self.events.iter().map(|e| e.user).collect();
        users.sort_unstable();
        users.dedup();
        users
    }

    /// Same events with timestamps reassigned: event `i` (in the current
    /// order) receives the time of event `perm[i]`.
    pub fn with_permuted_times(&self, perm: &[usize]) -> Cascade {
        debug_assert_eq!(perm.len(), self.events.len());
        let mut events: Vec<Event> = self
            .events
            .iter()
            .zip(perm)
            .map(|(e, &p)| Event {
                user: e.user,
                time: self.events[p].time,
            })
            .collect();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        Cascade {
            word: self.word.clone(),
            events,
            horizon: self.horizon,
            origin_ns: self.origin_ns,
        }
    }
}

/// Converts hours to whole nanoseconds, the resolution of the event file.
pub fn quantize_hours(hours: f64) -> f64 {
    (hours * NANOS_PER_HOUR).round() / NANOS_PER_HOUR
}

/// Parses decimal epoch seconds exactly into nanoseconds.
pub fn parse_epoch_ns(s: &str) -> Option<i64> {
    let s = s.trim();
    if s.contains(['e', 'E']) {
        let v: f64 = s.parse().ok()?;
        return v.is_finite().then(|| (v * 1e9).round() as i64);
    }
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: i64 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
    let mut frac: i64 = 0;
    for (k, b) in frac_part.bytes().take(9).enumerate() {
        frac += i64::from(b - b'0') * 10i64.pow(8 - k as u32);
    }
    let total = secs.checked_mul(NANOS_PER_SECOND)?.checked_add(frac)?;
    Some(if neg { -total } else { total })
}

fn format_epoch_ns(ns: i64) -> String {
    let sign = if ns < 0 { "-" } else { "" };
    let abs = ns.unsigned_abs();
    let (secs, frac) = (abs / 1_000_000_000, abs % 1_000_000_000);
    if frac == 0 {
        format!("{sign}{secs}")
    } else {
        let frac = format!("{frac:09}");
        format!("{sign}{secs}.{}", frac.trim_end_matches('0'))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Time zero for every word; defaults to each word's earliest event.
    pub origin_epoch_seconds: Option<i64>,
    /// Observation window end; defaults to each word's latest event time.
    pub horizon_hours: Option<f64>,
}

/// Reads `word<TAB>user_id<TAB>epoch_seconds` lines into per-word cascades.
/// Users missing from `graph` are added as isolated nodes.
pub fn read_events<R: BufRead>(
    reader: R,
    graph: &mut SocialGraph,
    opts: &IngestOptions,
) -> Result<BTreeMap<String, Cascade>> {
    let mut raw: BTreeMap<String, Vec<(UserId, i64)>> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                lineno + 1,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let (word, user) = (fields[0].trim(), fields[1].trim());
        if word.is_empty() || user.is_empty() {
            return Err(Error::parse(lineno + 1, "empty word or user id"));
        }
        let ns = parse_epoch_ns(fields[2])
            .ok_or_else(|| Error::parse(lineno + 1, format!("bad timestamp `{}`", fields[2])))?;
        let user = graph.ensure_user(user);
        raw.entry(word.to_string()).or_default().push((user, ns));
    }

    let mut out = BTreeMap::new();
    for (word, rows) in raw {
        let earliest = rows.iter().map(|r| r.1).min().expect("non-empty group");
        let origin_ns = match opts.origin_epoch_seconds {
            Some(s) => s
                .checked_mul(NANOS_PER_SECOND)
                .ok_or_else(|| Error::InvalidArgument("origin out of range".into()))?,
            None => earliest,
        };
        if earliest < origin_ns {
            return Err(Error::InvalidArgument(format!(
                "word `{word}` has events before the configured origin"
            )));
        }
        let events: Vec<Event> = rows
            .into_iter()
            .map(|(user, ns)| Event {
                user,
                time: (ns - origin_ns) as f64 / NANOS_PER_HOUR,
            })
            .collect();
        let latest = events.iter().map(|e| e.time).fold(0.0, f64::max);
        let horizon = opts.horizon_hours.unwrap_or(latest);
        if horizon < latest {
            return Err(Error::InvalidArgument(format!(
                "word `{word}` has events after the configured horizon"
            )));
        }
        let mut cascade = Cascade::new(word.clone(), events, horizon)?;
        cascade.origin_ns = origin_ns;
        out.insert(word, cascade);
    }
    Ok(out)
}

/// Writes cascades in the event-file format read by [`read_events`].
pub fn write_events<'a, W, I>(mut w: W, cascades: I, graph: &SocialGraph) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Cascade>,
{
    for c in cascades {
        for e in &c.events {
            let ns = c.origin_ns + (e.time * NANOS_PER_HOUR).round() as i64;
            writeln!(w, "{}\t{}\t{}", c.word, graph.name(e.user), format_epoch_ns(ns))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exposure {
    pub neighbor: UserId,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRecord {
    pub target: UserId,
    /// Distinct exposing neighbors, ordered by first exposure time.
    pub exposers: Vec<Exposure>,
    pub adoption: Option<f64>,
}

/// One record per user exposed at least once, ordered by target id.
pub fn exposures(cascade: &Cascade, graph: &SocialGraph) -> Vec<ExposureRecord> {
    let n = graph.len();
    let times = cascade.times_by_user(n);
    let adoption: Vec<Option<f64>> = times.iter().map(|t| t.first().copied()).collect();
    let origin = cascade.origin_hours();

    let mut incoming: Vec<Vec<Exposure>> = vec![Vec::new(); n];
    for (i, own) in times.iter().enumerate() {
        if own.is_empty() {
            continue;
        }
        let source = UserId(i as u32);
        for nb in graph.neighbors(source) {
            // The edge must exist strictly before the exposing event.
            let first = match nb.formed_at {
                None => own.first().copied(),
                Some(f) => {
                    let formed = f - origin;
                    let k = own.partition_point(|&t| t <= formed);
                    own.get(k).copied()
                }
            };
            let Some(t) = first else { continue };
            if let Some(a) = adoption[nb.user.index()] {
                if t >= a {
                    continue;
                }
            }
            incoming[nb.user.index()].push(Exposure {
                neighbor: source,
                time: t,
            });
        }
    }

    incoming
        .into_iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(j, mut exposers)| {
            exposers.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.neighbor.cmp(&b.neighbor)));
            ExposureRecord {
                target: UserId(j as u32),
                exposers,
                adoption: adoption[j],
            }
        })
        .collect()
}

pub const BUCKET_LABELS: [&str; 3] = ["1", "2", "3+"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCount {
    pub at_risk: usize,
    pub infected: usize,
}

impl BucketCount {
    /// `None` for an empty bucket.
    pub fn risk(&self) -> Option<f64> {
        (self.at_risk > 0).then(|| self.infected as f64 / self.at_risk as f64)
    }
}

/// Per-bucket infection counts. A user enters bucket `k` at their `k`-th
/// distinct exposure if not yet adopted, and counts as infected there when
/// adoption follows before any further exposure (bucket 3 is open-ended).
pub fn infection_risk(records: &[ExposureRecord]) -> [BucketCount; 3] {
    let mut buckets = [BucketCount::default(); 3];
    for r in records {
        let k_max = r.exposers.len();
        for (b, bucket) in buckets.iter_mut().enumerate() {
            let k = b + 1;
            if k_max < k {
                break;
            }
            let t_k = r.exposers[k - 1].time;
            if matches!(r.adoption, Some(a) if a <= t_k) {
                break;
            }
            bucket.at_risk += 1;
            if let Some(a) = r.adoption {
                let next = if k < 3 { r.exposers.get(k).map(|e| e.time) } else { None };
                if next.is_none_or(|t_next| a <= t_next) {
                    bucket.infected += 1;
                }
            }
        }
    }
    buckets
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRisk {
    pub bucket: String,
    pub at_risk: usize,
    pub infected: usize,
    pub risk: Option<f64>,
    /// Null risk per permutation; permutations that leave the bucket empty are skipped.
    pub null_risks: Vec<f64>,
    pub null_mean: Option<f64>,
    pub ratio: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

impl BucketRisk {
    /// Observed-to-null ratios, one per permutation with a positive null risk.
    pub fn ratio_samples(&self) -> Vec<f64> {
        match self.risk {
            Some(obs) => self.null_risks.iter().filter(|&&r| r > 0.0).map(|&r| obs / r).collect(),
            None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub word: String,
    pub events: usize,
    pub permutations: usize,
    pub seed: u64,
    pub buckets: Vec<BucketRisk>,
}

impl RiskReport {
    pub fn is_empty(&self) -> bool {
        self.buckets.iter().all(|b| b.ratio.is_none())
    }
}

/// 95% interval from nearest-rank 2.5 / 97.5 percentiles.
pub(crate) fn percentile_ci(samples: &[f64]) -> Option<(f64, f64)> {
    if samples.is_empty() {
        return None;
    }
    let mut v = samples.to_vec();
    let lo = nearest_rank(&mut v, 2.5).ok()?;
    let hi = nearest_rank(&mut v, 97.5).ok()?;
    Some((lo, hi))
}

/// Bucket risks of the cascade after reassigning timestamps by `perm`.
pub fn permuted_risk(cascade: &Cascade, graph: &SocialGraph, perm: &[usize]) -> [BucketCount; 3] {
    infection_risk(&exposures(&cascade.with_permuted_times(perm), graph))
}

/// Random permutation for replicate `replicate`; each replicate draws from
/// its own ChaCha stream so results do not depend on scheduling.
pub fn replicate_permutation(n: usize, seed: u64, replicate: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

pub fn shuffle_test(cascade: &Cascade, graph: &SocialGraph, permutations: usize, seed: u64) -> Result<RiskReport> {
    if permutations == 0 {
        return Err(Error::InvalidArgument("permutations must be >= 1".into()));
    }
    let observed = infection_risk(&exposures(cascade, graph));
    let null: Vec<[BucketCount; 3]> = (0..permutations as u64)
        .into_par_iter()
        .map(|r| {
            let perm = replicate_permutation(cascade.len(), seed, r);
            permuted_risk(cascade, graph, &perm)
        })
        .collect();

    let buckets = (0..3)
        .map(|b| {
            let obs = observed[b];
            let null_risks: Vec<f64> = null.iter().filter_map(|n| n[b].risk()).collect();
            let null_mean = (!null_risks.is_empty()).then(|| null_risks.iter().sum::<f64>() / null_risks.len() as f64);
            let risk = obs.risk();
            let ratio = match (risk, null_mean) {
                (Some(r), Some(m)) if m > 0.0 => Some(r / m),
                _ => None,
            };
            let mut out = BucketRisk {
                bucket: BUCKET_LABELS[b].to_string(),
                at_risk: obs.at_risk,
                infected: obs.infected,
                risk,
                null_risks,
                null_mean,
                ratio,
                ci_lo: None,
                ci_hi: None,
            };
            if ratio.is_some() {
                if let Some((lo, hi)) = percentile_ci(&out.ratio_samples()) {
                    out.ci_lo = Some(lo);
                    out.ci_hi = Some(hi);
                }
            }
            out
        })
        .collect();

    Ok(RiskReport {
        word: cascade.word.clone(),
        events: cascade.len(),
        permutations,
        seed,
        buckets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRisk {
    pub class: String,
    pub bucket: String,
    pub words: usize,
    /// Mean of the member words' ratios.
    pub ratio: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Pools ratio samples across the words of each class and across
/// permutations. Words missing from `classes` fall into `"unclassified"`.
pub fn aggregate_risk(reports: &[RiskReport], classes: &BTreeMap<String, String>) -> Vec<ClassRisk> {
    let mut grouped: BTreeMap<&str, Vec<&RiskReport>> = BTreeMap::new();
    for r in reports {
        let class = classes.get(&r.word).map_or("unclassified", String::as_str);
        grouped.entry(class).or_default().push(r);
    }
    let mut out = Vec::new();
    for (class, members) in grouped {
        for (b, label) in BUCKET_LABELS.iter().enumerate() {
            let mut ratios = Vec::new();
            let mut pooled = Vec::new();
            for r in &members {
                let Some(bucket) = r.buckets.get(b) else { continue };
                if let Some(ratio) = bucket.ratio {
                    ratios.push(ratio);
                    pooled.extend(bucket.ratio_samples());
                }
            }
            let Some((lo, hi)) = percentile_ci(&pooled) else {
                continue;
            };
            out.push(ClassRisk {
                class: class.to_string(),
                bucket: label.to_string(),
                words: ratios.len(),
                ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
                ci_lo: lo,
                ci_hi: hi,
            });
        }
    }
    out
}

/// Flat TSV for plotting: one row per word and bucket.
pub fn write_risk_tsv<W: Write>(mut w: W, reports: &[RiskReport], classes: &BTreeMap<String, String>) -> Result<()> {
    writeln!(
        w,
        "word\tclass\tbucket\tat_risk\tinfected\trisk\tnull_mean\tratio\tci_lo\tci_hi"
    )?;
    for r in reports {
        let class = classes.get(&r.word).map_or("unclassified", String::as_str);
        for b in &r.buckets {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.word,
                class,
                b.bucket,
                b.at_risk,
                b.infected,
                tsv::opt(b.risk),
                tsv::opt(b.null_mean),
                tsv::opt(b.ratio),
                tsv::opt(b.ci_lo),
                tsv::opt(b.ci_hi)
            )?;
        }
    }
    Ok(())
}

pub fn write_class_risk_tsv<W: Write>(mut w: W, rows: &[ClassRisk]) -> Result<()> {
    writeln!(w, "class\tbucket\twords\tratio\tci_lo\tci_hi")?;
    for r in rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.class,
            r.bucket,
            r.words,
            tsv::float(r.ratio),
            tsv::float(r.ci_lo),
            tsv::float(r.ci_hi)
        )?;
    }
    Ok(())
}
