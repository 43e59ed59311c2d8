use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use modelfree::sim::{simulate_dataset, Noise, NoiseKind, SimScenario, Truth};
use modelfree::variance::{var_empirical_boot, var_multiplier_boot, var_sandwich};
use modelfree::{build_design, fit_ols, parse_formula, DesignMatrix, Method, WeightsType};

fn design(n: usize) -> DesignMatrix {
    let sc = SimScenario {
        n,
        truth: Truth::Quadratic,
        noise: Noise { kind: NoiseKind::Heteroscedastic, sigma: 1.0 },
        reps: 1,
        b_grid: vec![],
        methods: vec![Method::Sandwich],
        level: 0.95,
        seed: 1,
        weights_type: WeightsType::Rademacher,
        subsample_m: None,
    };
    build_design(&parse_formula("y ~ x").unwrap(), &simulate_dataset(&sc, 0)).unwrap()
}

fn bench_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_ols");
    for n in [500, 5000, 50_000] {
        let dm = design(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &dm, |b, dm| b.iter(|| fit_ols(black_box(dm)).unwrap()));
    }
    group.finish();
}

fn bench_variance(c: &mut Criterion) {
    let fit = fit_ols(&design(500)).unwrap();
    c.bench_function("sandwich/500", |b| b.iter(|| var_sandwich(black_box(&fit)).unwrap()));
    c.bench_function("multiplier_boot/500/B=1000", |b| {
        b.iter(|| var_multiplier_boot(black_box(&fit), 1000, WeightsType::Rademacher, 1).unwrap())
    });
    c.bench_function("empirical_boot/500/B=1000", |b| {
        b.iter(|| var_empirical_boot(black_box(&fit), 1000, 500, 1).unwrap())
    });
}

criterion_group!(benches, bench_fit, bench_variance);
criterion_main!(benches);
