//! Undirected mutual-reply network with city labels.
//!
//! Users are interned to dense [`UserId`] indices so that per-user state
//! elsewhere in the crate can live in plain vectors. Adjacency lists are kept
//! sorted by neighbor id, which makes edge lookup a binary search and
//! common-neighbor enumeration a linear merge.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId(pub u32);

impl UserId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub user: UserId,
    /// Edge formation time in hours since the Unix epoch. `None` means the
    /// edge predates every event.
    pub formed_at: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SocialGraph {
    names: Vec<String>,
    index: HashMap<String, UserId>,
    adjacency: Vec<Vec<Neighbor>>,
    edge_count: usize,
    city: Vec<Option<CityId>>,
    city_labels: Vec<String>,
    city_index: HashMap<String, CityId>,
    tracked: Vec<bool>,
}

impl SocialGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph with users named `0..n` and no edges.
    pub fn with_users(n: usize) -> Self {
        let mut g = Self::new();
        for i in 0..n {
            g.ensure_user(&i.to_string());
        }
        g
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        (0..self.names.len() as u32).map(UserId)
    }

    pub fn user(&self, name: &str) -> Option<UserId> {
        self.index.get(name).copied()
    }

    pub fn lookup(&self, name: &str) -> Result<UserId> {
        self.user(name).ok_or_else(|| Error::UnknownUser(name.to_string()))
    }

    pub fn name(&self, user: UserId) -> &str {
        &self.names[user.index()]
    }

    pub fn contains(&self, user: UserId) -> bool {
        user.index() < self.names.len()
    }

    /// Returns the id for `name`, adding it as an isolated node if unseen.
    pub fn ensure_user(&mut self, name: &str) -> UserId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = UserId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.adjacency.push(Vec::new());
        self.city.push(None);
        id
    }

    /// Adds the undirected edge `a – b`. A repeated edge keeps the earliest
    /// formation time, with `None` counting as earliest.
    pub fn add_edge(&mut self, a: UserId, b: UserId, formed_at: Option<f64>) -> Result<()> {
        if a == b {
            return Err(Error::InvalidArgument(format!("self-loop on {}", self.name(a))));
        }
        if !self.contains(a) || !self.contains(b) {
            return Err(Error::UnknownUser(format!("{a} or {b}")));
        }
        if let Some(t) = formed_at {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "edge formation time must be finite and non-negative, got {t}"
                )));
            }
        }
        let inserted = Self::insert_half(&mut self.adjacency[a.index()], b, formed_at);
        Self::insert_half(&mut self.adjacency[b.index()], a, formed_at);
        if inserted {
            self.edge_count += 1;
        }
        Ok(())
    }

    pub fn add_edge_by_name(&mut self, a: &str, b: &str, formed_at: Option<f64>) -> Result<()> {
        let a = self.ensure_user(a);
        let b = self.ensure_user(b);
        self.add_edge(a, b, formed_at)
    }

    fn insert_half(list: &mut Vec<Neighbor>, other: UserId, formed_at: Option<f64>) -> bool {
        match list.binary_search_by_key(&other, |n| n.user) {
            Ok(pos) => {
                let slot = &mut list[pos].formed_at;
                *slot = match (*slot, formed_at) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    _ => None,
                };
                false
            }
            Err(pos) => {
                list.insert(pos, Neighbor { user: other, formed_at });
                true
            }
        }
    }

    pub fn neighbors(&self, user: UserId) -> &[Neighbor] {
        &self.adjacency[user.index()]
    }

    pub fn degree(&self, user: UserId) -> usize {
        self.adjacency[user.index()].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, a: UserId, b: UserId) -> bool {
        self.edge(a, b).is_some()
    }

    pub fn edge(&self, a: UserId, b: UserId) -> Option<&Neighbor> {
        let list = self.adjacency.get(a.index())?;
        list.binary_search_by_key(&b, |n| n.user).ok().map(|pos| &list[pos])
    }

    /// Every edge once, as `(a, b)` with `a < b`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (UserId, UserId, Option<f64>)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, list)| {
            let a = UserId(i as u32);
            list.iter()
                .filter(move |n| n.user > a)
                .map(move |n| (a, n.user, n.formed_at))
        })
    }

    pub fn set_city(&mut self, user: UserId, label: &str) {
        let id = match self.city_index.get(label) {
            Some(&id) => id,
            None => {
                let id = CityId(self.city_labels.len() as u32);
                self.city_labels.push(label.to_string());
                self.city_index.insert(label.to_string(), id);
                self.tracked.push(false);
                id
            }
        };
        self.city[user.index()] = Some(id);
    }

    pub fn city(&self, user: UserId) -> Option<CityId> {
        self.city[user.index()]
    }

    pub fn city_label(&self, city: CityId) -> &str {
        &self.city_labels[city.0 as usize]
    }

    pub fn is_tracked(&self, city: CityId) -> bool {
        self.tracked[city.0 as usize]
    }

    /// City of `user` if it is one of the tracked cities.
    pub fn tracked_city(&self, user: UserId) -> Option<CityId> {
        self.city(user).filter(|&c| self.is_tracked(c))
    }

    /// Replaces the tracked-city set. Labels that no user carries are
    /// registered so a later `set_city` picks up the flag.
    pub fn set_tracked_cities<S: AsRef<str>>(&mut self, labels: &[S]) {
        self.tracked.iter_mut().for_each(|t| *t = false);
        for label in labels {
            let label = label.as_ref();
            let id = match self.city_index.get(label) {
                Some(&id) => id,
                None => {
                    let id = CityId(self.city_labels.len() as u32);
                    self.city_labels.push(label.to_string());
                    self.city_index.insert(label.to_string(), id);
                    self.tracked.push(false);
                    id
                }
            };
            self.tracked[id.0 as usize] = true;
        }
    }

    /// Every city label seen so far, tracked or not.
    pub fn city_labels(&self) -> &[String] {
        &self.city_labels
    }

    pub fn tracked_cities(&self) -> Vec<&str> {
        self.city_labels
            .iter()
            .zip(&self.tracked)
            .filter(|(_, &t)| t)
            .map(|(l, _)| l.as_str())
            .collect()
    }

    /// Parses `user_a<TAB>user_b[<TAB>formed_at_epoch_seconds]` lines.
    pub fn read_edge_list<R: BufRead>(reader: R) -> Result<Self> {
        let mut g = Self::new();
        g.extend_edge_list(reader)?;
        Ok(g)
    }

    pub fn extend_edge_list<R: BufRead>(&mut self, reader: R) -> Result<()> {
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(Error::parse(
                    lineno + 1,
                    format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let formed_at = match fields.get(2) {
                Some(s) => {
                    let secs: f64 = s
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(lineno + 1, format!("bad formation time `{s}`")))?;
                    Some(secs / 3600.0)
                }
                None => None,
            };
            let (a, b) = (fields[0].trim(), fields[1].trim());
            if a.is_empty() || b.is_empty() {
                return Err(Error::parse(lineno + 1, "empty user id"));
            }
            self.add_edge_by_name(a, b, formed_at)
                .map_err(|e| Error::parse(lineno + 1, e.to_string()))?;
        }
        Ok(())
    }

    /// Parses `user_id<TAB>city_label` lines. Unknown users become isolated nodes.
    pub fn read_cities<R: BufRead>(&mut self, reader: R) -> Result<()> {
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            match (fields.next(), fields.next(), fields.next()) {
                (Some(u), Some(c), None) if !u.trim().is_empty() && !c.trim().is_empty() => {
                    let id = self.ensure_user(u.trim());
                    self.set_city(id, c.trim());
                }
                _ => return Err(Error::parse(lineno + 1, "expected `user_id<TAB>city_label`")),
            }
        }
        Ok(())
    }

    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        for (a, b, formed_at) in self.edges() {
            match formed_at {
                Some(h) => writeln!(w, "{}\t{}\t{}", self.name(a), self.name(b), h * 3600.0)?,
                None => writeln!(w, "{}\t{}", self.name(a), self.name(b))?,
            }
        }
        Ok(())
    }

    pub fn write_cities<W: Write>(&self, mut w: W) -> Result<()> {
        for u in self.users() {
            if let Some(c) = self.city(u) {
                writeln!(w, "{}\t{}", self.name(u), self.city_label(c))?;
            }
        }
        Ok(())
    }
}

fn check_user(g: &SocialGraph, u: UserId) -> Result<()> {
    if g.contains(u) {
        Ok(())
    } else {
        Err(Error::UnknownUser(u.to_string()))
    }
}

/// Adamic-Adar embeddedness: sum of `1 / ln deg(k)` over common neighbors `k`.
///
/// Common neighbors are visited in ascending id order, so the result is
/// bitwise symmetric in `(i, j)`.
pub fn adamic_adar(g: &SocialGraph, i: UserId, j: UserId) -> Result<f64> {
    check_user(g, i)?;
    check_user(g, j)?;
    if i == j {
        return Err(Error::InvalidArgument(
            "Adamic-Adar is undefined for a self-dyad".into(),
        ));
    }
    let (a, b) = (g.neighbors(i), g.neighbors(j));
    let (mut x, mut y) = (0, 0);
    let mut sum = 0.0;
    while x < a.len() && y < b.len() {
        match a[x].user.cmp(&b[y].user) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                // A common neighbor is adjacent to both i and j, so its degree is >= 2.
                sum += 1.0 / (g.degree(a[x].user) as f64).ln();
                x += 1;
                y += 1;
            }
        }
    }
    Ok(sum)
}

/// Nearest-rank percentile: the value at rank `ceil(p/100 * n)` of the
/// ascending sort. Sorts `values` in place.
pub fn nearest_rank(values: &mut [f64], percentile: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::InvalidArgument(format!(
            "percentile must lie in (0, 100], got {percentile}"
        )));
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    Ok(values[rank.clamp(1, n) - 1])
}

/// Percentile of Adamic-Adar scores over `dyads`; the per-word cut-off for
/// the strong-tie feature.
pub fn tie_strength_threshold(g: &SocialGraph, dyads: &[(UserId, UserId)], percentile: f64) -> Result<f64> {
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::InvalidArgument(format!(
            "percentile must lie in (0, 100), got {percentile}"
        )));
    }
    if dyads.is_empty() {
        return Err(Error::InsufficientData("empty dyad pool".into()));
    }
    let mut values = dyads
        .iter()
        .map(|&(i, j)| adamic_adar(g, i, j))
        .collect::<Result<Vec<_>>>()?;
    nearest_rank(&mut values, percentile)
}

pub fn degree_distribution(g: &SocialGraph) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for u in g.users() {
        *hist.entry(g.degree(u)).or_insert(0) += 1;
    }
    hist
}

/// Fraction of edges joining two tracked-city users whose cities agree.
pub fn geo_assortativity(g: &SocialGraph) -> Result<f64> {
    let (mut both, mut same) = (0usize, 0usize);
    for (a, b, _) in g.edges() {
        if let (Some(ca), Some(cb)) = (g.tracked_city(a), g.tracked_city(b)) {
            both += 1;
            if ca == cb {
                same += 1;
            }
        }
    }
    if both == 0 {
        return Err(Error::InsufficientData(
            "no edge has both endpoints in tracked cities".into(),
        ));
    }
    Ok(same as f64 / both as f64)
}
