//! Parametric multivariate Hawkes process with an exponential kernel.
//!
//! The intensity of user `m'` is
//!
//! ```text
//! λ_m'(t) = μ_m' + Σ_{t_n < t} θ·f(m_n → m') κ(t − t_n),   κ(Δ) = exp(−γΔ)
//! ```
//!
//! where `f` is the binary dyad feature vector from [`crate::features`].
//! [`loglik_naive`] evaluates the log-likelihood by direct double sums and
//! serves as the reference; [`Precomputed`] holds the per-event recursive
//! messages and per-sender aggregates that make [`loglik_fast`] and
//! [`grad`] linear in the number of events.

mod fit;
mod likelihood;
mod precompute;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSet, NUM_FEATURES};
use crate::graph::UserId;

pub use fit::{fit, fit_precomputed, FitConfig, FitResult};
pub use likelihood::{intensity, intensity_integral, loglik_naive};
pub use precompute::{grad, loglik_fast, Gradient, Precomputed, RecursiveMessages};

/// Exponential decay kernel with an optional truncation lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    /// γ, per hour.
    pub decay: f64,
    /// τ★ in hours. Lags at or beyond it are treated as zero influence by
    /// the accelerated likelihood. `None` disables truncation.
    pub truncation: Option<f64>,
}

impl Default for Kernel {
    /// γ = 1/h so that κ(1 h) = e⁻¹, truncated at 24 h.
    fn default() -> Self {
        Self {
            decay: 1.0,
            truncation: Some(24.0),
        }
    }
}

impl Kernel {
    pub fn new(decay: f64, truncation: Option<f64>) -> Result<Self> {
        if !(decay.is_finite() && decay > 0.0) {
            return Err(Error::InvalidArgument(format!("decay must be positive, got {decay}")));
        }
        if let Some(t) = truncation {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("truncation must be positive, got {t}")));
            }
        }
        Ok(Self { decay, truncation })
    }

    pub fn untruncated(decay: f64) -> Self {
        Self {
            decay,
            truncation: None,
        }
    }

    #[inline]
    pub fn value(&self, dt: f64) -> f64 {
        (-self.decay * dt).exp()
    }

    /// κ with truncation applied.
    #[inline]
    pub fn truncated(&self, dt: f64) -> f64 {
        match self.truncation {
            Some(tau) if dt >= tau => 0.0,
            _ => self.value(dt),
        }
    }

    /// ∫₀^dt κ = (1 − κ(dt)) / γ.
    #[inline]
    pub fn mass(&self, dt: f64) -> f64 {
        -(-self.decay * dt).exp_m1() / self.decay
    }

    pub(crate) fn cutoff(&self) -> f64 {
        self.truncation.unwrap_or(f64::INFINITY)
    }
}

/// Feature weights and base intensities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Params {
    pub theta: [f64; NUM_FEATURES],
    /// Base intensity per user; users absent from the map have μ = 0.
    pub mu: BTreeMap<UserId, f64>,
}

impl Params {
    pub fn new(theta: [f64; NUM_FEATURES], mu: BTreeMap<UserId, f64>) -> Self {
        Self { theta, mu }
    }

    pub fn mu_of(&self, user: UserId) -> f64 {
        self.mu.get(&user).copied().unwrap_or(0.0)
    }

    /// Pairwise influence θ·f.
    #[inline]
    pub fn alpha(&self, f: FeatureSet) -> f64 {
        dot(&self.theta, &f.as_array())
    }

    pub fn is_feasible(&self) -> bool {
        self.theta
            .iter()
            .chain(self.mu.values())
            .all(|&v| v.is_finite() && v >= 0.0)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64; NUM_FEATURES], b: &[f64; NUM_FEATURES]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}
