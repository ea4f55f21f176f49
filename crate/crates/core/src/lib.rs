//! Diffusion of lexical innovations over a mutual-reply social network.
//!
//! - [`graph`]: the undirected network, Adamic-Adar tie strength and city labels.
//! - [`cascade`]: word adoption events, exposures and the shuffle test for
//!   relative infection risk.
//! - [`features`]: binary dyad features and model feature sets.
//! - [`hawkes`]: the parametric Hawkes model, its likelihood and the fitter.
//! - [`simulate`]: synthetic graphs and cascades with known parameters.
//! - [`stats`]: likelihood-ratio tests and Benjamini-Hochberg correction.

// NaN-rejecting `!(x > 0.0)` guards and index loops over fixed-size feature arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cascade;
pub mod error;
pub mod features;
pub mod graph;
pub mod hawkes;
pub mod simulate;
pub mod stats;
pub mod tsv;

pub use cascade::{Cascade, Event, RiskReport};
pub use error::{Error, Result};
pub use features::{Feature, FeatureContext, FeatureSet, ModelSpec};
pub use graph::{SocialGraph, UserId};
pub use hawkes::{FitConfig, FitResult, Kernel, Params};
pub use simulate::{GraphKind, SimConfig};
pub use stats::{CompareOptions, CompareReport};
