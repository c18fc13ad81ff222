use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use semirank::llt::{run_test, TestConfig};
use semirank::objective::{EvalStrategy, ObjectiveContext, PairTable, PerturbationWeights};
use semirank::simgen::{simulate_dataset, Scenario, ScenarioConfig};

fn context(n: usize) -> ObjectiveContext {
    let ds = simulate_dataset(&ScenarioConfig::new(Scenario::One, n, 0.25, 0.1), 1).unwrap();
    ObjectiveContext::from_dataset(&ds).unwrap()
}

fn strategies(c: &mut Criterion) {
    let mut g = c.benchmark_group("smoothed_gradient");
    let beta = [0.6, 0.8];
    for n in [100, 400] {
        let ctx = context(n);
        let w = PerturbationWeights::ones(n);
        for (name, s) in [
            ("aggregated", EvalStrategy::Aggregated),
            ("direct", EvalStrategy::Direct),
        ] {
            let table = PairTable::new(&ctx, &w, s).unwrap();
            g.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| table.smoothed_with_gradient(black_box(&beta), 0.3).unwrap())
            });
        }
    }
    g.finish();
}

fn threads(c: &mut Criterion) {
    let label = if semirank::par::is_parallel() {
        "parallel"
    } else {
        "sequential"
    };
    let ds = simulate_dataset(&ScenarioConfig::new(Scenario::One, 150, 0.25, 0.1), 2).unwrap();
    let cfg = TestConfig {
        resamples: 20,
        max_bandwidth_iters: 3,
        strategy: EvalStrategy::Direct,
        ..TestConfig::default()
    };
    let mut g = c.benchmark_group("rank_test");
    g.sample_size(10);
    g.bench_function(label, |b| {
        b.iter(|| run_test(black_box(&ds), &cfg).unwrap())
    });
    #[cfg(feature = "parallel")]
    {
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        g.bench_function("parallel_one_thread", |b| {
            b.iter(|| one.install(|| run_test(black_box(&ds), &cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, strategies, threads);
criterion_main!(benches);
