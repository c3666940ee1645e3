use std::hint::black_box;

use countmorl_bench::{grid_fixture, random_fixture};
use countmorl_core::{
    build_conservative_mdp, exact_counts, fit_ensemble, rollout_plan, value_iteration, CountEnsemble, CountMode,
    FeatureKind, GridKind, KnownEnv, PenaltySpec, RolloutConfig,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_value_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("value_iteration");
    for ns in [16, 64, 256] {
        let (mdp, _) = random_fixture(ns, 4, 0);
        group.bench_with_input(BenchmarkId::from_parameter(ns), &mdp, |b, mdp| {
            b.iter(|| value_iteration(black_box(mdp), 1e-8).unwrap())
        });
    }
    group.finish();
}

fn bench_hash_ingest(c: &mut Criterion) {
    let (_, data) = grid_fixture(GridKind::Bridge, 30_000);
    let mut group = c.benchmark_group("hash_ingest");
    for bits in [16, 64] {
        group.bench_with_input(BenchmarkId::from_parameter(bits), &bits, |b, &bits| {
            b.iter(|| {
                let mut ens = CountEnsemble::new(64, 4, FeatureKind::OneHot, bits, 5, 0.5, 3).unwrap();
                ens.ingest_dataset(black_box(&data)).unwrap();
                ens
            })
        });
    }
    group.finish();
}

fn bench_rollout_plan(c: &mut Criterion) {
    let (mdp, data) = random_fixture(64, 4, 20_000);
    let ens = fit_ensemble(&data, 5, 1, true).unwrap();
    let counts = exact_counts(&data);
    let env = KnownEnv::from_mdp(&mdp);
    let spec = PenaltySpec::practical(1.0, CountMode::Avg, 0.5).unwrap();
    let cfg = RolloutConfig { epochs: 10, ..Default::default() };
    c.bench_function("rollout_plan", |b| {
        b.iter(|| rollout_plan(&ens, &counts, &data, &env, &spec, &cfg).unwrap())
    });
    c.bench_function("conservative_mdp", |b| {
        b.iter(|| build_conservative_mdp(&ens, &counts, &env, &spec).unwrap())
    });
}

criterion_group!(benches, bench_value_iteration, bench_hash_ingest, bench_rollout_plan);
criterion_main!(benches);
