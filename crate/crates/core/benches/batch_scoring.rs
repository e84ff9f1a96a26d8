//! Sequential versus data-parallel scoring of the synthetic store.

#[path = "../tests/support/mod.rs"]
mod support;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use storyeval::pipeline::score_store;
use storyeval::{EngineConfig, Execution};

fn batch_scoring(c: &mut Criterion) {
    let cfg = EngineConfig::default();
    let mut group = c.benchmark_group("score_store");
    group.sample_size(20);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_function(name, |b| {
            b.iter_batched(
                || {
                    let dir = tempfile::tempdir().unwrap();
                    let store = support::synthetic_store(dir.path());
                    (dir, store)
                },
                |(dir, store)| {
                    let run = score_store(&store, &cfg, exec).unwrap();
                    assert_eq!(run.scored, 35);
                    dir
                },
                BatchSize::PerIteration,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, batch_scoring);
criterion_main!(benches);
