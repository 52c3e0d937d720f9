use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rspde_core::{
    picard_solve, sample_noise, solve_lcp, solve_poisson, CoefficientPair, GridField, GridSpec,
    LcpProblem, PicardOptions, PsorOptions,
};

fn sine(x: &[f64]) -> f64 {
    -x.iter()
        .map(|t| (std::f64::consts::PI * t).sin())
        .product::<f64>()
}

fn poisson(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_poisson");
    for (d, n) in [(1, 1024), (2, 64), (3, 32)] {
        let rhs = GridField::from_fn(GridSpec::new(d, n).unwrap(), sine);
        group.bench_with_input(BenchmarkId::new(format!("d{d}"), n), &rhs, |b, rhs| {
            b.iter(|| solve_poisson(black_box(rhs)))
        });
    }
    group.finish();
}

fn lcp(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_lcp");
    group.sample_size(10);
    let opts = PsorOptions::default();
    for (d, n) in [(1, 128), (2, 32), (3, 16)] {
        let problem = LcpProblem::new(GridField::from_fn(GridSpec::new(d, n).unwrap(), |x| {
            sine(x) * 2.0 - 0.5
        }))
        .unwrap();
        group.bench_with_input(BenchmarkId::new(format!("d{d}"), n), &problem, |b, p| {
            b.iter(|| solve_lcp(black_box(p), &opts).unwrap())
        });
    }
    group.finish();
}

fn picard(c: &mut Criterion) {
    let mut group = c.benchmark_group("picard_solve");
    group.sample_size(10);
    let coeffs = CoefficientPair::from_specs("linear:-0.1,1", "const:0.1").unwrap();
    let opts = PicardOptions::default();
    for (d, n) in [(1, 64), (2, 16)] {
        let noise = sample_noise(GridSpec::new(d, n).unwrap(), 7);
        group.bench_with_input(BenchmarkId::new(format!("d{d}"), n), &noise, |b, w| {
            b.iter(|| picard_solve(&coeffs, black_box(w), &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, poisson, lcp, picard);
criterion_main!(benches);
