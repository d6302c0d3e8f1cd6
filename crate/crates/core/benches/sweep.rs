use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use enercoord::agents::SyncNetwork;
use enercoord::batch::{random_suite, run_batch, run_batch_sequential};
use enercoord::run::{Algorithm, RunRequest};
use enercoord::scenario::generate_random;
use enercoord::ExecMode;

fn batch(c: &mut Criterion) {
    let suite = random_suite(8, 0, 32).unwrap();
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    for algorithm in [Algorithm::Gen, Algorithm::JointTwoscale] {
        let req = RunRequest::new(algorithm, ExecMode::Matrix);
        group.bench_with_input(BenchmarkId::new("parallel", algorithm), &req, |b, req| {
            b.iter(|| run_batch(black_box(&suite), req))
        });
        group.bench_with_input(BenchmarkId::new("sequential", algorithm), &req, |b, req| {
            b.iter(|| run_batch_sequential(black_box(&suite), req))
        });
    }
    group.finish();
}

fn rounds(c: &mut Criterion) {
    let mut group = c.benchmark_group("message_round");
    for n in [64usize, 512, 2048] {
        let (net, _) = generate_random(n, 7).network_and_demand().unwrap();
        let agents = SyncNetwork::new(&net.graph, &net.flow_weights());
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut out = vec![0.0; n];
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| {
            b.iter(|| agents.round(black_box(&x), &mut out))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, _| {
            b.iter(|| agents.round_sequential(black_box(&x), &mut out))
        });
    }
    group.finish();
}

criterion_group!(benches, batch, rounds);
criterion_main!(benches);
