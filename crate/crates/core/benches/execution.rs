use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mfdp::fftmech::fft_release_mse_monte_carlo;
use mfdp::mechlab::sample_noise_with;
use mfdp::participation::{make_schema, sens_brute_certified};
use mfdp::treestamp::{sweep_stamps, Family};
use mfdp::workloads::prefix_workload;
use mfdp::{Execution, Matrix};

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn brute_sensitivity(c: &mut Criterion) {
    let mut g = c.benchmark_group("sens_brute");
    let schema = make_schema(256, 16, 16).unwrap();
    let enc = Matrix::from_fn(256, 256, |i, j| if i >= j { 1.0 / (1.0 + (i - j) as f64) } else { 0.0 });
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::new(name, "n256_k16"), |b| {
            b.iter(|| sens_brute_certified(&enc, &schema, exec).unwrap())
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut g = c.benchmark_group("fft_monte_carlo");
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::new(name, "n512_1000_trials"), |b| {
            b.iter(|| fft_release_mse_monte_carlo(512, 1.0, 1.0, 1000, 3, exec).unwrap())
        });
    }
    g.finish();
}

fn stamp_sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("sweep_stamps");
    g.sample_size(10);
    let schema = make_schema(400, 4, 100).unwrap();
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::new(name, "fft_optimal_n400"), |b| {
            b.iter(|| sweep_stamps(Family::FftOptimal, &schema, &[1, 2, 4, 5, 8, 10], exec).unwrap())
        });
    }
    g.finish();
}

fn noise(c: &mut Criterion) {
    let mut g = c.benchmark_group("sample_noise");
    let dec = prefix_workload(512);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::new(name, "n512_d256"), |b| {
            b.iter(|| sample_noise_with(&dec, 256, 1.0, 9, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, brute_sensitivity, monte_carlo, stamp_sweep, noise);
criterion_main!(benches);
