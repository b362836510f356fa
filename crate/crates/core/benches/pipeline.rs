//! Pipeline hot spots on one thread versus the default rayon pool.
//!
//! `cargo bench --no-default-features` builds the plain sequential code path.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use num_complex::Complex64;

use omni_core::fft::Fft2;
use omni_core::metrics::{contrast_vs_accommodation, ContrastSetup};
use omni_core::optics::OpticalConfig;
use omni_core::synthesis::synthesize;
use omni_core::wgs::WgsParams;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn fft(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft2_1024");
    let plan = Fft2::new(1024, 1024);
    let input = Array2::from_shape_fn((1024, 1024), |(r, c)| Complex64::new((r * c % 7) as f64, 0.0));
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    let mut x = input.clone();
                    plan.forward(&mut x);
                    black_box(x)
                })
            })
        });
    }
    group.finish();
}

fn wgs(c: &mut Criterion) {
    let mut group = c.benchmark_group("synthesize_4_planes_512");
    group.sample_size(10);
    let cfg = OpticalConfig::desk();
    let params = WgsParams::default();
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| black_box(synthesize(&cfg, &[0.0, 1.0, 2.0, 3.0], &params).unwrap())))
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("focus_sweep_9_points");
    group.sample_size(10);
    let cfg = OpticalConfig::desk();
    let setup = ContrastSetup::default();
    let foci: Vec<f64> = (0..9).map(|i| 1.0 + 0.125 * i as f64).collect();
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| black_box(contrast_vs_accommodation(&cfg, (1.0, 2.0), &foci, &setup).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, fft, wgs, sweep);
criterion_main!(benches);
