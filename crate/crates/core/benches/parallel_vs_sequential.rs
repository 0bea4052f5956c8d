//! Training-set generation and regression assembly on the rayon pool versus a
//! single-threaded pool. Build with `--no-default-features` to time the plain
//! sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use stencil_lab::regression::assemble_regression;
use stencil_lab::training::{generate_training_set, TrainingConfig};
use stencil_lab::Grid1D;

fn pipeline(cfg: &TrainingConfig) {
    let ts = generate_training_set(cfg).unwrap();
    let sys = assemble_regression(&ts, 3, 1e-6, 100.0).unwrap();
    criterion::black_box(sys.gram());
}

fn bench(c: &mut Criterion) {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut group = c.benchmark_group("generate_and_assemble");
    group.sample_size(10);
    for n in [64, 256] {
        let cfg = TrainingConfig {
            grid: Grid1D::new(n, 1.0).unwrap(),
            ..TrainingConfig::default()
        };
        group.bench_with_input(BenchmarkId::new("parallel", n), &cfg, |b, cfg| b.iter(|| pipeline(cfg)));
        group.bench_with_input(BenchmarkId::new("single_thread", n), &cfg, |b, cfg| {
            b.iter(|| single.install(|| pipeline(cfg)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
