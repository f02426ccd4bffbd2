use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use rfnlar::oracle::{leaf_reports_on, mixture_density, monte_carlo_path, zeta_bar};
use rfnlar::{fit_forest, BuildConfig, NoiseModel, OracleConfig};
use rfnlar_bench::{dataset, spec};

fn bench_leaf_scan(c: &mut Criterion) {
    let data = dataset("f3", 1600, 1);
    let forest = fit_forest(data, &BuildConfig::new(1, 236), 20, 2).unwrap();
    let ocfg = OracleConfig {
        n_mc: 100_000,
        burn_in: 1000,
        seed: 3,
    };
    let mc = monte_carlo_path(&spec("f3", 1600, 1), &ocfg).unwrap();
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    g.bench_function("leaf_scan_B20_n1e5", |b| {
        b.iter(|| leaf_reports_on(black_box(forest.trees()), &mc))
    });
    g.finish();
}

fn bench_transform(c: &mut Criterion) {
    let noise = NoiseModel::laplace(1.0).unwrap();
    let h = mixture_density(&noise, 5.0).unwrap();
    c.bench_function("zeta_bar", |b| {
        b.iter(|| zeta_bar(black_box(&noise), 1.0).unwrap())
    });
    c.bench_function("mixture_quantile", |b| {
        b.iter(|| h.quantile(black_box(0.37)).unwrap())
    });
}

criterion_group!(benches, bench_leaf_scan, bench_transform);
criterion_main!(benches);
