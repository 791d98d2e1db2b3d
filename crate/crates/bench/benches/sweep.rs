//! Backward-forward sweep timings over doubling horizons, one group per backend.
//!
//! `LQPROX_BENCH_MAX_N` caps the horizon (default 2048), `LQPROX_WORKERS` sets the
//! parallel pool size (default 4, one leg per worker).

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use lqprox::io::generate::{generate, GeneratorConfig};
use lqprox::parallel::default_legs;
use lqprox::{
    make_partition, solve_serial, ParallelSolver, PartitionStrategy, ProximalState, StageKernel,
};

const NX: usize = 37;
const NU: usize = 12;

fn env_usize(key: &str, default: usize) -> usize {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn horizons() -> Vec<usize> {
    let max = env_usize("LQPROX_BENCH_MAX_N", 2048);
    (4..=11).map(|k| 1usize << k).filter(|&n| n <= max).collect()
}

fn sweep(c: &mut Criterion) {
    let workers = env_usize("LQPROX_WORKERS", 4);
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10).measurement_time(Duration::from_secs(3));
    for n in horizons() {
        let problem = generate(&GeneratorConfig::new(0, n, NX, NU, 0));
        let prox = ProximalState::zeros(&problem, 1e-6).unwrap();
        group.throughput(Throughput::Elements(n as u64));
        for (name, kernel) in [("serial", StageKernel::Dense), ("blocksparse", StageKernel::BlockSparse)] {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| solve_serial(black_box(&problem), &prox, kernel).unwrap())
            });
        }
        let j = default_legs(n, workers);
        let part = make_partition(n, j, PartitionStrategy::Equal).unwrap();
        let solver = ParallelSolver::new(part, workers, StageKernel::BlockSparse).unwrap();
        group.bench_with_input(BenchmarkId::new(format!("parallel-J{j}-W{workers}"), n), &n, |b, _| {
            b.iter(|| solver.solve(black_box(&problem), &prox).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
