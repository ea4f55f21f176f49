//! Flat run configuration. Durations carry their unit in the key name.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wordflow::{Feature, FitConfig, GraphKind, Kernel, ModelSpec};

use crate::Failure;

/// Where each word's clock starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OriginMode {
    /// Time zero is the word's earliest event.
    PerWord,
    /// Time zero is `origin_epoch_seconds` for every word.
    Fixed,
}

/// Where each word's observation window ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HorizonMode {
    LastEvent,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimGraph {
    ErdosRenyi,
    PlantedCities,
    EmbeddedCore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `user_a<TAB>user_b[<TAB>formed_at_epoch_seconds]`.
    pub edges_path: String,
    /// `user<TAB>city`; empty for none.
    pub cities_path: String,
    /// `word<TAB>user<TAB>epoch_seconds`.
    pub events_path: String,
    /// `word<TAB>class`; empty for none.
    pub classes_path: String,
    pub output_dir: String,
    /// Cities eligible for the locality feature. Empty tracks every city.
    pub tracked_cities: Vec<String>,
    pub origin: OriginMode,
    pub origin_epoch_seconds: i64,
    pub horizon: HorizonMode,
    pub horizon_hours: f64,
    /// Words to analyse. Empty selects all.
    pub words: Vec<String>,

    pub kernel_decay_per_hour: f64,
    /// Zero disables truncation.
    pub kernel_truncation_hours: f64,
    pub tie_strength_percentile: f64,
    pub permutations: usize,
    pub alpha: f64,
    pub fit_tolerance: f64,
    pub fit_max_iterations: usize,
    pub fit_theta_init: f64,
    pub seed: u64,
    pub fit_spec: ModelSpec,
    pub base_spec: ModelSpec,
    pub added_features: Vec<String>,

    pub sim_graph: SimGraph,
    pub sim_users: usize,
    pub sim_edge_prob: f64,
    pub sim_cities: usize,
    pub sim_p_in: f64,
    pub sim_p_out: f64,
    pub sim_cores: usize,
    pub sim_core_size: usize,
    pub sim_pendants: usize,
    pub sim_locality: f64,
    pub sim_words: usize,
    /// Weights for F1..F4.
    pub sim_theta: [f64; 4],
    pub sim_base_rate_per_hour: f64,
    pub sim_horizon_hours: f64,
    pub sim_max_branching: f64,
    pub sim_max_events: usize,

    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            edges_path: "edges.tsv".into(),
            cities_path: String::new(),
            events_path: "events.tsv".into(),
            classes_path: String::new(),
            output_dir: "out".into(),
            tracked_cities: Vec::new(),
            origin: OriginMode::PerWord,
            origin_epoch_seconds: 0,
            horizon: HorizonMode::LastEvent,
            horizon_hours: 0.0,
            words: Vec::new(),
            kernel_decay_per_hour: 1.0,
            kernel_truncation_hours: 24.0,
            tie_strength_percentile: 90.0,
            permutations: 1000,
            alpha: 0.05,
            fit_tolerance: fit.tol_abs,
            fit_max_iterations: fit.max_iterations,
            fit_theta_init: fit.theta_init,
            seed: 0,
            fit_spec: ModelSpec::full(),
            base_spec: ModelSpec::baseline(),
            added_features: vec!["F3".into(), "F4".into()],
            sim_graph: SimGraph::EmbeddedCore,
            sim_users: 1000,
            sim_edge_prob: 0.01,
            sim_cities: 4,
            sim_p_in: 0.02,
            sim_p_out: 0.002,
            sim_cores: 200,
            sim_core_size: 3,
            sim_pendants: 1,
            sim_locality: 0.5,
            sim_words: 1,
            sim_theta: [0.15, 0.1, 0.2, 0.05],
            sim_base_rate_per_hour: 0.05,
            sim_horizon_hours: 200.0,
            sim_max_branching: 0.99,
            sim_max_events: 5_000_000,
            base_dir: PathBuf::from("."),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, Failure> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Self::from_toml(&text, &base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("kernel_decay_per_hour", self.kernel_decay_per_hour)?;
        if !(self.kernel_truncation_hours >= 0.0 && self.kernel_truncation_hours.is_finite()) {
            return Err(invalid("kernel_truncation_hours must be >= 0"));
        }
        if !(self.tie_strength_percentile > 0.0 && self.tie_strength_percentile < 100.0) {
            return Err(invalid("tie_strength_percentile must lie in (0, 100)"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha must lie in (0, 1)"));
        }
        if self.permutations == 0 {
            return Err(invalid("permutations must be >= 1"));
        }
        positive("fit_tolerance", self.fit_tolerance)?;
        positive("fit_theta_init", self.fit_theta_init)?;
        if self.fit_max_iterations == 0 {
            return Err(invalid("fit_max_iterations must be >= 1"));
        }
        if self.horizon == HorizonMode::Fixed {
            positive("horizon_hours", self.horizon_hours)?;
        }
        self.added()?;
        positive("sim_horizon_hours", self.sim_horizon_hours)?;
        positive("sim_max_branching", self.sim_max_branching)?;
        if !(self.sim_base_rate_per_hour >= 0.0 && self.sim_base_rate_per_hour.is_finite()) {
            return Err(invalid("sim_base_rate_per_hour must be >= 0"));
        }
        if self.sim_theta.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(invalid("sim_theta entries must be >= 0"));
        }
        if self.sim_words == 0 {
            return Err(invalid("sim_words must be >= 1"));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Kernel {
        let truncation = (self.kernel_truncation_hours > 0.0).then_some(self.kernel_truncation_hours);
        Kernel::new(self.kernel_decay_per_hour, truncation).expect("validated kernel")
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            tol_abs: self.fit_tolerance,
            max_iterations: self.fit_max_iterations,
            theta_init: self.fit_theta_init,
            fit_theta: true,
        }
    }

    pub fn added(&self) -> Result<Vec<Feature>, Failure> {
        let mut out = Vec::new();
        for s in &self.added_features {
            let f: Feature = s.parse().map_err(|e: wordflow::Error| invalid(e.to_string()))?;
            if self.base_spec.contains(f) {
                return Err(invalid(format!("added feature {f} is already in base_spec")));
            }
            out.push(f);
        }
        if out.is_empty() {
            return Err(invalid("added_features must name at least one feature"));
        }
        Ok(out)
    }

    pub fn graph_kind(&self) -> GraphKind {
        match self.sim_graph {
            SimGraph::ErdosRenyi => GraphKind::ErdosRenyi {
                n: self.sim_users,
                p: self.sim_edge_prob,
            },
            SimGraph::PlantedCities => GraphKind::PlantedCities {
                n: self.sim_users,
                cities: self.sim_cities,
                p_in: self.sim_p_in,
                p_out: self.sim_p_out,
            },
            SimGraph::EmbeddedCore => GraphKind::EmbeddedCore {
                cores: self.sim_cores,
                core_size: self.sim_core_size,
                pendants: self.sim_pendants,
                locality: self.sim_locality,
            },
        }
    }
}
