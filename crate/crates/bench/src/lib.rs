//! Fixtures shared by the criterion benchmarks in `benches/`.

use wordflow::simulate::{simulate, synth_graph, uniform_base};
use wordflow::{Cascade, FeatureContext, GraphKind, Params, SimConfig, SocialGraph};

pub const THETA: [f64; 4] = [0.15, 0.1, 0.2, 0.05];

pub fn graph(cores: usize) -> SocialGraph {
    synth_graph(
        GraphKind::EmbeddedCore {
            cores,
            core_size: 3,
            pendants: 1,
            locality: 0.5,
        },
        1,
    )
    .expect("valid graph parameters")
}

pub fn sim_config(g: &SocialGraph, horizon: f64) -> SimConfig {
    SimConfig::new(Params::new(THETA, uniform_base(g, 0.05)), horizon, 1)
}

/// A subcritical cascade on `graph(cores)` with its word context.
pub fn cascade(cores: usize, horizon: f64) -> (SocialGraph, FeatureContext, Cascade) {
    let g = graph(cores);
    let sim_ctx = FeatureContext::all_users(&g, 90.0).expect("valid percentile");
    let c = simulate(&g, &sim_ctx, &sim_config(&g, horizon)).expect("subcritical");
    let ctx = FeatureContext::for_cascade(&g, &c, 90.0).expect("valid percentile");
    (g, ctx, c)
}
