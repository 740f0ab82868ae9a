use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use granule_bench::{blobs, uniform};
use granule_core::ball_kmeans::{lloyd_run, run};
use granule_core::BkmConfig;

fn bench_kmeans(c: &mut Criterion) {
    let fixtures = [
        ("blobs-k10", blobs(10, 200, 4, 12.0, 1), 10),
        ("blobs-k5", blobs(5, 400, 2, 10.0, 2), 5),
        ("uniform-k8", uniform(2000, 3, 3), 8),
    ];
    let mut g = c.benchmark_group("kmeans");
    for (name, ds, k) in &fixtures {
        let cfg = BkmConfig::new(*k).with_seed(11);
        g.bench_with_input(BenchmarkId::new("ball", name), ds, |b, ds| {
            b.iter(|| run(ds, &cfg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("lloyd", name), ds, |b, ds| {
            b.iter(|| lloyd_run(ds, &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(
    name = group;
    config = Criterion::default()
        .warm_up_time(Duration::from_millis(500))
        .measurement_time(Duration::from_secs(2))
        .sample_size(10);
    targets = bench_kmeans
);
criterion_main!(group);
