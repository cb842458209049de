use std::hint::black_box;

use clusterlab::rng::StreamKey;
use clusterlab::*;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn pmf(c: &mut Criterion) {
    let mut g = c.benchmark_group("pmf");
    let spec = CompoundSpec::new(5.0, ClusterSizeDist::new(vec![0.5, 0.3, 0.2]).unwrap()).unwrap();
    g.bench_function("compound_poisson_recursion", |b| {
        b.iter(|| compound_poisson_pmf(black_box(&spec), Truncation::at(500)).unwrap())
    });
    g.bench_function("polya_aeppli_closed_form", |b| {
        b.iter(|| polya_aeppli_pmf(black_box(5.0), 0.5, Truncation::at(500)).unwrap())
    });
    let geo = ClusterSizeDist::geometric(0.5).unwrap();
    g.bench_function("compound_binomial_1e4", |b| {
        b.iter(|| compound_binomial_pmf(10_000, 1e-4, black_box(&geo), Truncation::at(200)).unwrap())
    });
    g.finish();
}

fn orbit_stepping(c: &mut Criterion) {
    const STEPS: u64 = 100_000;
    let mut g = c.benchmark_group("orbit");
    g.throughput(Throughput::Elements(STEPS));
    let key = StreamKey::new(1, "bench");
    for backend in [Backend::ExactDigit, Backend::Float64, Backend::Float64Dither] {
        let map = MapSystem::with_backend(MapKind::Interval(IntervalMap::linear(3).unwrap()), backend).unwrap();
        g.bench_with_input(BenchmarkId::new("linear3", format!("{backend:?}")), &map, |b, map| {
            b.iter(|| {
                let mut s = map.sample_stationary(&key, 0).unwrap();
                for _ in 0..STEPS {
                    map.step_in_place(&mut s);
                }
                s
            })
        });
    }
    let cml = MapSystem::new(MapKind::Cml(CmlSpec::uniform(IntervalMap::linear(2).unwrap(), 2, 0.1).unwrap()))
        .unwrap()
        .with_burn_in(64);
    g.bench_function("cml_n2", |b| {
        b.iter(|| {
            let mut s = cml.sample_stationary(&key, 0).unwrap();
            for _ in 0..STEPS {
                cml.step_in_place(&mut s);
            }
            s
        })
    });
    g.finish();
}

fn cluster_stats(c: &mut Criterion) {
    let mut g = c.benchmark_group("cluster");
    g.sample_size(10);
    let map = MapSystem::linear(3).unwrap();
    let target = TargetSet::ball(0.5, 1e-3);
    let mu = target.exact_measure(&map).unwrap();
    let proc = OrbitProcess::new(&map, &target, mu).unwrap();
    let key = StreamKey::new(2, "bench");
    g.bench_function("periodic_k50_2e3_entries", |b| {
        b.iter(|| cluster_statistics(&proc, &ClusterConfig::new(50, 2_000), &key).unwrap())
    });
    g.bench_function("bernoulli_k50_2e3_entries", |b| {
        b.iter(|| cluster_statistics(&BernoulliProcess { mu: 2e-3 }, &ClusterConfig::new(50, 2_000), &key).unwrap())
    });
    g.finish();
}

fn quadrature(c: &mut Criterion) {
    let mut g = c.benchmark_group("quadrature");
    let sine = IntervalMap::sine_perturbed(2, 0.1).unwrap();
    for k in [2usize, 6] {
        g.bench_with_input(BenchmarkId::new("sine_alpha_hat", k), &k, |b, &k| {
            b.iter(|| alpha_hat_integral(&sine, &DiagonalDensity::Lebesgue, 2, 0.1, k, 1e-12).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, pmf, orbit_stepping, cluster_stats, quadrature);
criterion_main!(benches);
