//! Benchmarks the per-coordinate subproblem sweep: the rayon-parallel path
//! against the sequential fallback, across problem sizes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use breglr::auxfn::coord_weights;
use breglr::bregman::model_distribution;
use breglr::data::{normalize, synth_hyperplane, NormalizeOptions};
use breglr::trainer::{sweep_parallel, sweep_sequential, Budget, TrainConfig};

fn bench_sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("coordinate_sweep");
    for &(dim, m) in &[(50usize, 200usize), (200, 400), (800, 400)] {
        let (train, _) = synth_hyperplane(dim, m, 1, 0.2, 7).unwrap();
        let (_, a) = normalize(&train, NormalizeOptions::default()).unwrap();
        let n = a.n_features();
        let cfg = TrainConfig::new(Budget::Aggregate(5.0));
        let (u, _) = cfg.budget.resolve(n).unwrap();
        let lambda = vec![0.0; n];
        let active = vec![true; n];
        let q = model_distribution(&a, &lambda).unwrap();
        let w = coord_weights(&q, &a).unwrap();

        group.bench_with_input(BenchmarkId::new("sequential", dim), &dim, |b, _| {
            b.iter(|| sweep_sequential(&w, &lambda, &u, &active, &cfg.knobs).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("parallel", dim), &dim, |b, _| {
            b.iter(|| sweep_parallel(&w, &lambda, &u, &active, &cfg.knobs).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweeps);
criterion_main!(benches);
