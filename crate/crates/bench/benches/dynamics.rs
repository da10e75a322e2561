use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sivsaw::experiments::{compile_in, run_histogram, run_odar, DEFAULT_QUBIT_FREQ};
use sivsaw::fitting::{fit_lineshape, Lineshape};
use sivsaw::saw_device::s_parameters;
use sivsaw_bench::{context, grid, odar_shot};

fn single_shot(c: &mut Criterion) {
    let ctx = context();
    let seq = odar_shot(&ctx);
    c.bench_function("compile odar shot", |b| b.iter(|| compile_in(black_box(&seq), &ctx).unwrap()));
    c.bench_function("evolve odar shot", |b| b.iter(|| run_histogram(black_box(&seq), &ctx).unwrap()));
}

fn scans(c: &mut Criterion) {
    let ctx = context();
    let freqs = grid(3.38e9, 10e6, 11);
    let mut g = c.benchmark_group("scan");
    g.sample_size(10);
    g.bench_function("odar 11 points", |b| b.iter(|| run_odar(black_box(&freqs), 20e-9, 2e-3, &ctx).unwrap()));
    g.finish();
}

fn device_and_fit(c: &mut Criterion) {
    let ctx = context();
    let freqs = grid(3.0e9, 2e6, 401);
    c.bench_function("s-parameters 401 points", |b| {
        b.iter(|| freqs.iter().map(|&f| s_parameters(&ctx.device, black_box(f))).collect::<Vec<_>>())
    });
    let f = grid(3.2e9, 5e6, 81);
    let y: Vec<f64> = f
        .iter()
        .map(|&v| 0.1 + Lineshape::Gaussian.profile((v - DEFAULT_QUBIT_FREQ) / 45e6))
        .collect();
    c.bench_function("gaussian fit 81 points", |b| {
        b.iter(|| fit_lineshape(black_box(&f), black_box(&y), Lineshape::Gaussian).unwrap())
    });
}

criterion_group!(benches, single_shot, scans, device_and_fit);
criterion_main!(benches);
