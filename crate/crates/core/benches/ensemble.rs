//! Sequential against rayon-parallel execution of the ensemble hot paths.
//!
//! Run with `cargo bench -p varlab-core`. Building with
//! `--no-default-features` turns `Execution::Parallel` into the sequential
//! path, so both arms should then time the same.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use varlab_core::lab::config::{ExperimentConfig, ExperimentKind};
use varlab_core::lab::Lab;
use varlab_core::variation::vq_power;
use varlab_core::weights::{ap_characteristic, Weight};
use varlab_core::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn config(kind: ExperimentKind, op: &str, count: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind, op);
    cfg.ensemble.count = count;
    cfg.grid.n_max = 64;
    cfg
}

fn ensemble_estimates(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble_estimate");
    group.sample_size(10);
    let cases = [
        ("ergodic_lazy_walk64", config(ExperimentKind::VariationalErgodic, "lazy_walk(64)", 200)),
        ("semigroup_cycle_laplacian32", config(ExperimentKind::VariationalSemigroupContinuous, "cycle_laplacian(32)", 200)),
    ];
    for (name, cfg) in &cases {
        for (mode, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(*name, mode), cfg, |b, cfg| {
                let lab = Lab::new(exec);
                b.iter(|| black_box(lab.run(cfg).unwrap()))
            });
        }
    }
    group.finish();
}

fn characteristic(c: &mut Criterion) {
    let mut group = c.benchmark_group("ap_characteristic");
    let w = Weight::power(256, 0.75).unwrap();
    for (mode, exec) in MODES {
        group.bench_function(mode, |b| b.iter(|| black_box(ap_characteristic(&w, 2.0, 512, exec).unwrap())));
    }
    group.finish();
}

fn variation(c: &mut Criterion) {
    let a: Vec<f64> = (0..1024).map(|k| (k as f64 * 0.37).sin() + 0.01 * k as f64).collect();
    c.bench_function("vq_power_1024", |b| b.iter(|| black_box(vq_power(black_box(&a), 2.5))));
}

criterion_group!(benches, ensemble_estimates, characteristic, variation);
criterion_main!(benches);
