use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use wordflow::graph::{adamic_adar, UserId};
use wordflow::hawkes::{fit_precomputed, grad, loglik_fast, Precomputed};
use wordflow::simulate::simulate;
use wordflow::{FeatureContext, FitConfig, Kernel, ModelSpec, Params};
use wordflow_bench::{cascade, graph, sim_config, THETA};

fn likelihood(c: &mut Criterion) {
    let (g, ctx, cascade) = cascade(400, 200.0);
    let pre = Precomputed::new(&g, &ctx, &cascade, Kernel::default()).unwrap();
    let params = Params::new(THETA, cascade.adopters().into_iter().map(|u| (u, 0.05)).collect());
    let mut group = c.benchmark_group(format!("likelihood/{}_events", cascade.len()));
    group.sample_size(20);
    group.bench_function("precompute", |b| {
        b.iter(|| Precomputed::new(black_box(&g), &ctx, &cascade, Kernel::default()).unwrap())
    });
    group.bench_function("loglik_fast", |b| {
        b.iter(|| loglik_fast(black_box(&pre), black_box(&params)))
    });
    group.bench_function("grad", |b| b.iter(|| grad(black_box(&pre), black_box(&params))));
    group.bench_function("fit_full", |b| {
        b.iter(|| fit_precomputed(black_box(&pre), ModelSpec::full(), &FitConfig::default()).unwrap())
    });
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let g = graph(400);
    let ctx = FeatureContext::all_users(&g, 90.0).unwrap();
    let cfg = sim_config(&g, 200.0);
    let mut group = c.benchmark_group("simulate");
    group.sample_size(20);
    group.bench_function("embedded_core_400", |b| {
        b.iter_batched(
            || cfg.clone(),
            |cfg| simulate(&g, &ctx, &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn embeddedness(c: &mut Criterion) {
    let g = graph(2000);
    let edges: Vec<(UserId, UserId)> = g.edges().map(|(a, b, _)| (a, b)).collect();
    c.bench_function("adamic_adar/all_edges", |b| {
        b.iter(|| {
            edges
                .iter()
                .map(|&(i, j)| adamic_adar(black_box(&g), i, j).unwrap())
                .sum::<f64>()
        })
    });
    c.bench_function("feature_context/all_users", |b| {
        b.iter(|| FeatureContext::all_users(black_box(&g), 90.0).unwrap())
    });
}

criterion_group!(benches, likelihood, simulation, embeddedness);
criterion_main!(benches);
