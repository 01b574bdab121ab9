use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use lexsimp_bench::synthetic_instances;
use lexsimp_core::metrics::{evaluate_all, map_at_k, GoldView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn predictions(n: usize, len: usize) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| (0..len).map(|_| format!("sub{}", rng.random_range(0..30))).collect())
        .collect()
}

fn bench_metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate_all");
    for n in [386usize, 5000] {
        let gold: Vec<GoldView> = synthetic_instances(n, 12).iter().map(GoldView::from_instance).collect();
        let preds = predictions(n, 10);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| evaluate_all(black_box(&preds), black_box(&gold)).unwrap())
        });
    }
    group.finish();

    let gold: Vec<GoldView> = synthetic_instances(386, 12)
        .iter()
        .map(GoldView::from_instance)
        .collect();
    let preds = predictions(386, 40);
    c.bench_function("map_at_40", |b| {
        b.iter(|| map_at_k(40, black_box(&preds), black_box(&gold)).unwrap())
    });
}

criterion_group!(benches, bench_metrics);
criterion_main!(benches);
