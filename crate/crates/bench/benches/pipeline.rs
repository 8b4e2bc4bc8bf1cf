use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qkl_bench::{basis, covariance, problem};
use qkl_core::SpectralBasis;

fn roots(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectrum");
    for n in [10, 50, 200] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| SpectralBasis::solve(black_box(0.525), 1.0, n).unwrap())
        });
    }
    g.finish();
}

fn blocks(c: &mut Criterion) {
    let mut g = c.benchmark_group("covariance");
    g.sample_size(10);
    for n in [5, 10, 20] {
        let b = basis(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &b, |bench, b| bench.iter(|| covariance(black_box(b))));
    }
    g.finish();
}

fn qef(c: &mut Criterion) {
    let mut g = c.benchmark_group("qef");
    for n in [10, 20, 40] {
        let p = problem(n);
        let (lo, hi) = p.critical_bracket().unwrap();
        let theta = 0.5 * p.critical_theta(lo, hi).unwrap();
        g.bench_with_input(BenchmarkId::new("evaluate", n), &theta, |b, &t| b.iter(|| p.evaluate(black_box(t)).unwrap()));
        g.bench_with_input(BenchmarkId::new("series", n), &theta, |b, &t| b.iter(|| p.series_report(black_box(t), 0.0).unwrap()));
    }
    let p = problem(10);
    g.bench_function("critical_theta/10", |b| {
        b.iter(|| {
            let (lo, hi) = p.critical_bracket().unwrap();
            p.critical_theta(lo, hi).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, roots, blocks, qef);
criterion_main!(benches);
