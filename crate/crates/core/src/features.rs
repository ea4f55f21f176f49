//! Binary dyad features and the model feature sets built from them.
//!
//! | bit | name | fires when |
//! |-----|------|-----------|
//! | F1  | self-activation | sender and recipient coincide |
//! | F2  | mutual reply    | the dyad is an edge |
//! | F3  | strong tie      | edge, and Adamic-Adar at or above the word's threshold |
//! | F4  | local           | edge, and both users in the same tracked city |

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cascade::Cascade;
use crate::error::{Error, Result};
use crate::graph::{adamic_adar, tie_strength_threshold, SocialGraph, UserId};

pub const NUM_FEATURES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    SelfActivation,
    MutualReply,
    StrongTie,
    Local,
}

impl Feature {
    pub const ALL: [Feature; NUM_FEATURES] = [
        Feature::SelfActivation,
        Feature::MutualReply,
        Feature::StrongTie,
        Feature::Local,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        ["F1", "F2", "F3", "F4"][self.index()]
    }

    pub fn name(self) -> &'static str {
        ["self_activation", "mutual_reply", "strong_tie", "local"][self.index()]
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Feature::ALL
            .into_iter()
            .find(|f| f.code().eq_ignore_ascii_case(s) || f.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature `{s}`")))
    }
}

/// A subset of the four features, stored as a bitmask. Doubles as the
/// feature vector of a single dyad.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureSet(u8);

impl FeatureSet {
    pub const EMPTY: FeatureSet = FeatureSet(0);
    pub const ALL: FeatureSet = FeatureSet(0b1111);

    pub fn of(features: &[Feature]) -> Self {
        features.iter().fold(Self::EMPTY, |s, &f| s.with(f))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, f: Feature) -> bool {
        self.0 & (1 << f.index()) != 0
    }

    pub fn with(self, f: Feature) -> Self {
        FeatureSet(self.0 | (1 << f.index()))
    }

    pub fn intersect(self, other: FeatureSet) -> Self {
        FeatureSet(self.0 & other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Feature> {
        Feature::ALL.into_iter().filter(move |&f| self.contains(f))
    }

    pub fn as_array(self) -> [f64; NUM_FEATURES] {
        let mut out = [0.0; NUM_FEATURES];
        for f in self.iter() {
            out[f.index()] = 1.0;
        }
        out
    }

    /// Self-dyads carry no network feature; network features imply an edge.
    pub fn is_realizable(self) -> bool {
        use Feature::*;
        if self.contains(SelfActivation) {
            return self == FeatureSet::of(&[SelfActivation]);
        }
        !(self.contains(StrongTie) || self.contains(Local)) || self.contains(MutualReply)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("none");
        }
        let codes: Vec<&str> = self.iter().map(Feature::code).collect();
        f.write_str(&codes.join("+"))
    }
}

/// Active feature subset of a model. Always contains the F1+F2 baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelSpec(FeatureSet);

impl ModelSpec {
    pub fn new(features: FeatureSet) -> Result<Self> {
        if !features.contains(Feature::SelfActivation) || !features.contains(Feature::MutualReply) {
            return Err(Error::InvalidArgument(format!(
                "model `{features}` must include the F1+F2 baseline"
            )));
        }
        Ok(Self(features))
    }

    pub fn baseline() -> Self {
        Self(FeatureSet::of(&[Feature::SelfActivation, Feature::MutualReply]))
    }

    pub fn full() -> Self {
        Self(FeatureSet::ALL)
    }

    pub fn features(self) -> FeatureSet {
        self.0
    }

    pub fn contains(self, f: Feature) -> bool {
        self.0.contains(f)
    }

    pub fn with(self, f: Feature) -> Self {
        Self(self.0.with(f))
    }

    /// The single feature `self` adds on top of `base`, if it is an
    /// immediate nesting.
    pub fn added_over(self, base: ModelSpec) -> Option<Feature> {
        if self.0.intersect(base.0) != base.0 || self.0.len() != base.0.len() + 1 {
            return None;
        }
        self.0.iter().find(|&f| !base.contains(f))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = FeatureSet::EMPTY;
        for part in s.split('+') {
            set = set.with(part.parse()?);
        }
        ModelSpec::new(set)
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

/// Realizable feature configurations as seen through the active features of
/// `spec`, deduplicated and sorted by bitmask.
pub fn enumerate_configs(spec: ModelSpec) -> Vec<FeatureSet> {
    let configs: BTreeSet<FeatureSet> = (0u8..16)
        .map(FeatureSet)
        .filter(|c| c.is_realizable())
        .map(|c| c.intersect(spec.features()))
        .collect();
    configs.into_iter().collect()
}

/// Word-scoped inputs to the dyad features.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    /// Adamic-Adar cut-off; `None` when the pool was empty, in which case
    /// the strong-tie feature never fires.
    pub threshold: Option<f64>,
    pub percentile: f64,
    pub pool_size: usize,
    pool: HashMap<(UserId, UserId), f64>,
}

fn ordered(a: UserId, b: UserId) -> (UserId, UserId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl FeatureContext {
    /// The pool is every edge with at least one endpoint in `adopters`.
    pub fn new(graph: &SocialGraph, adopters: &[UserId], percentile: f64) -> Result<Self> {
        let adopter_set: BTreeSet<UserId> = adopters.iter().copied().collect();
        let mut dyads = Vec::new();
        for &a in &adopter_set {
            for nb in graph.neighbors(a) {
                // Count each edge once: skip when the other end is a smaller adopter.
                if adopter_set.contains(&nb.user) && nb.user < a {
                    continue;
                }
                dyads.push(ordered(a, nb.user));
            }
        }
        let threshold = match tie_strength_threshold(graph, &dyads, percentile) {
            Ok(t) => Some(t),
            Err(Error::InsufficientData(_)) => None,
            Err(e) => return Err(e),
        };
        let mut pool = HashMap::with_capacity(dyads.len());
        for &(a, b) in &dyads {
            pool.insert((a, b), adamic_adar(graph, a, b)?);
        }
        Ok(Self {
            threshold,
            percentile,
            pool_size: dyads.len(),
            pool,
        })
    }

    pub fn for_cascade(graph: &SocialGraph, cascade: &Cascade, percentile: f64) -> Result<Self> {
        Self::new(graph, &cascade.adopters(), percentile)
    }

    /// Context with every user treated as an adopter; used when generating
    /// synthetic cascades before any adoption is known.
    pub fn all_users(graph: &SocialGraph, percentile: f64) -> Result<Self> {
        let users: Vec<UserId> = graph.users().collect();
        Self::new(graph, &users, percentile)
    }

    fn is_strong(&self, graph: &SocialGraph, a: UserId, b: UserId) -> bool {
        let Some(threshold) = self.threshold else {
            return false;
        };
        let aa = match self.pool.get(&ordered(a, b)) {
            Some(&v) => v,
            None => adamic_adar(graph, a, b).unwrap_or(0.0),
        };
        aa >= threshold
    }
}

/// Feature vector of the dyad `sender → recipient`.
pub fn feature_vector(graph: &SocialGraph, ctx: &FeatureContext, sender: UserId, recipient: UserId) -> FeatureSet {
    use Feature::*;
    if sender == recipient {
        return FeatureSet::of(&[SelfActivation]);
    }
    if !graph.has_edge(sender, recipient) {
        return FeatureSet::EMPTY;
    }
    let mut f = FeatureSet::of(&[MutualReply]);
    if ctx.is_strong(graph, sender, recipient) {
        f = f.with(StrongTie);
    }
    if let (Some(a), Some(b)) = (graph.tracked_city(sender), graph.tracked_city(recipient)) {
        if a == b {
            f = f.with(Local);
        }
    }
    f
}

/// `f(m → ★)`: column sums of the feature vectors over all recipients.
pub fn aggregate_feature(graph: &SocialGraph, ctx: &FeatureContext, sender: UserId) -> [u32; NUM_FEATURES] {
    let mut out = [0u32; NUM_FEATURES];
    out[Feature::SelfActivation.index()] = 1;
    for nb in graph.neighbors(sender) {
        for f in feature_vector(graph, ctx, sender, nb.user).iter() {
            out[f.index()] += 1;
        }
    }
    out
}

pub fn aggregate_features(
    graph: &SocialGraph,
    ctx: &FeatureContext,
    senders: &[UserId],
) -> BTreeMap<UserId, [u32; NUM_FEATURES]> {
    senders.iter().map(|&m| (m, aggregate_feature(graph, ctx, m))).collect()
}

/// Audit table of per-word tie-strength thresholds.
pub fn write_threshold_tsv<'a, W, I>(mut w: W, rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a FeatureContext)>,
{
    writeln!(w, "word\taa_threshold\tpool_size")?;
    for (word, ctx) in rows {
        let t = crate::tsv::opt(ctx.threshold);
        writeln!(w, "{word}\t{t}\t{}", ctx.pool_size)?;
    }
    Ok(())
}
