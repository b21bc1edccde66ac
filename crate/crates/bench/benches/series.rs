use brl_core::annulus::{green, robin_radial};
use brl_core::linalg::{sym_eigen, Matrix};
use brl_core::ring::min_over_r;
use brl_core::{AnnulusGeometry, SeriesControl};
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn series(c: &mut Criterion) {
    let geom = AnnulusGeometry::new(0.5).unwrap();
    let x = [0.7, 0.0, 0.0, 0.0];
    let y = [0.0, 0.6, 0.1, 0.0];
    let mut g = c.benchmark_group("green");
    for terms in [50, 200, 1000] {
        let ctrl = SeriesControl::fixed(terms);
        g.bench_with_input(BenchmarkId::from_parameter(terms), &ctrl, |b, ctrl| {
            b.iter(|| green(black_box(&x), black_box(&y), &geom, ctrl).unwrap())
        });
    }
    g.finish();
    c.bench_function("robin_radial", |b| {
        b.iter(|| robin_radial(black_box(0.7), &geom, &SeriesControl::default()).unwrap())
    });
}

fn eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("sym_eigen");
    for n in [2, 6, 12] {
        let m = Matrix::from_fn(n, |i, j| {
            1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { n as f64 } else { 0.0 }
        });
        g.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| sym_eigen(black_box(m)))
        });
    }
    g.finish();
}

fn ring_scan(c: &mut Criterion) {
    let geom = AnnulusGeometry::new(0.5).unwrap();
    let ctrl = SeriesControl::default();
    let mut g = c.benchmark_group("ring_scan");
    g.sample_size(10);
    g.bench_function("k4_n128", |b| {
        b.iter(|| min_over_r(4, &geom, &ctrl, 128).unwrap())
    });
    g.finish();
}

criterion_group!(benches, series, eigen, ring_scan);
criterion_main!(benches);
