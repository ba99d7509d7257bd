use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use smoothcert::cpm::{certify_bonferroni_full, certify_cpm};
use smoothcert::intervals::{clopper_pearson_lower, clopper_pearson_upper};
use smoothcert::lipschitz::{radius_mono_lip, solve_s0};
use smoothcert::pub_bound::{spectral_norm_power_iteration, PowerIterationOptions};
use smoothcert::{BinomialObservation, LipschitzSpec, RiskLevel, Sigma};
use smoothcert_bench::{concentrated_rounds, gaussian_matrix};
use std::hint::black_box;

fn intervals(c: &mut Criterion) {
    let alpha = RiskLevel::new(0.001).unwrap();
    let mut group = c.benchmark_group("clopper_pearson");
    for n in [100u64, 10_000, 1_000_000] {
        let obs = BinomialObservation::new(n * 8 / 10, n).unwrap();
        group.bench_with_input(BenchmarkId::new("two_sided", n), &obs, |b, &obs| {
            b.iter(|| (clopper_pearson_lower(black_box(obs), alpha), clopper_pearson_upper(black_box(obs), alpha)))
        });
    }
    group.finish();
}

fn certification(c: &mut Criterion) {
    let alpha = RiskLevel::new(0.001).unwrap();
    let sigma = Sigma::new(0.5).unwrap();
    let mut group = c.benchmark_group("certify");
    group.sample_size(20);
    for classes in [10usize, 1000] {
        let (selection, estimation) = concentrated_rounds(classes, 1);
        group.bench_function(BenchmarkId::new("cpm", classes), |b| {
            b.iter(|| certify_cpm(black_box(&selection), black_box(&estimation), alpha, sigma).unwrap())
        });
        group.bench_function(BenchmarkId::new("bonferroni_full", classes), |b| {
            b.iter(|| certify_bonferroni_full(black_box(&estimation), alpha, sigma).unwrap())
        });
    }
    group.finish();
}

fn lipschitz(c: &mut Criterion) {
    c.bench_function("solve_s0", |b| b.iter(|| solve_s0(black_box(0.9), black_box(4.0)).unwrap()));
    let spec = LipschitzSpec::pointwise(4.0).unwrap();
    let sigma = Sigma::new(0.12).unwrap();
    c.bench_function("radius_mono_lip", |b| b.iter(|| radius_mono_lip(black_box(0.9), spec, sigma)));
}

fn power_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("power_iteration");
    group.sample_size(20);
    for dim in [10usize, 100, 200] {
        let m = gaussian_matrix(dim, 3);
        group.bench_with_input(BenchmarkId::from_parameter(dim), &m, |b, m| {
            b.iter(|| spectral_norm_power_iteration(black_box(m), PowerIterationOptions::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, intervals, certification, lipschitz, power_iteration);
criterion_main!(benches);
