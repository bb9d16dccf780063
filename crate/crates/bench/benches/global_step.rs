use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lgdiar::global::{run_global, FrameSelectStrategy};
use lgdiar_bench::{pair_chunks, random_transformer, windows};

fn batch_sizes(c: &mut Criterion) {
    let backend = random_transformer();
    let chunks = pair_chunks(backend.as_ref(), &windows(2, 120.0, 1), FrameSelectStrategy::All);
    let mut group = c.benchmark_group("global_batch");
    group.sample_size(10);
    for batch in [1usize, 32, 500] {
        group.bench_with_input(BenchmarkId::from_parameter(batch), &batch, |b, &batch| {
            b.iter(|| run_global(backend.as_ref(), &chunks, batch).unwrap())
        });
    }
    group.finish();
}

fn strategies(c: &mut Criterion) {
    let backend = random_transformer();
    let w = windows(2, 120.0, 1);
    let mut group = c.benchmark_group("global_strategy");
    group.sample_size(10);
    for strategy in [
        FrameSelectStrategy::All,
        FrameSelectStrategy::FirstN(64),
        FrameSelectStrategy::RandomN { n: 64, seed: 0 },
    ] {
        let chunks = pair_chunks(backend.as_ref(), &w, strategy);
        group.bench_function(strategy.to_string(), |b| b.iter(|| run_global(backend.as_ref(), &chunks, 500).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, batch_sizes, strategies);
criterion_main!(benches);
