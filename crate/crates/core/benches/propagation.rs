//! Worker-count comparison of the data-parallel kernels.
//!
//! `cargo bench` measures the rayon backend with one thread and with the full
//! pool; `cargo bench --no-default-features` measures the sequential backend.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use pulseforge::discrete::{init_random, optimize_discrete, DiscreteOptions};
use pulseforge::exec::{backend_name, map_indexed, with_workers};
use pulseforge::grape::{phase_gradient, GrapeOptions};
use pulseforge::spin::{fidelity, EnsembleSpec, PhasePulse};

fn worker_counts() -> Vec<usize> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    if cfg!(feature = "parallel") && all > 1 {
        vec![1, all]
    } else {
        vec![1]
    }
}

fn propagation(c: &mut Criterion) {
    let spec = EnsembleSpec::broadband_inversion();
    let pulse = PhasePulse::parabolic(spec.n_steps());
    let mut group = c.benchmark_group(format!("ensemble/{}", backend_name()));
    for workers in worker_counts() {
        group.bench_with_input(BenchmarkId::new("fidelity", workers), &workers, |b, &w| {
            with_workers(Some(w), || b.iter(|| fidelity(&spec, black_box(&pulse)).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("gradient", workers), &workers, |b, &w| {
            with_workers(Some(w), || b.iter(|| phase_gradient(&spec, black_box(&pulse)).unwrap()))
        });
    }
    group.finish();
}

fn campaign(c: &mut Criterion) {
    let spec = EnsembleSpec::broadband_inversion();
    let options = DiscreteOptions {
        ascent: GrapeOptions {
            max_iters: 5,
            ..GrapeOptions::default()
        },
        ..DiscreteOptions::default()
    };
    let mut group = c.benchmark_group(format!("campaign/{}", backend_name()));
    group.sample_size(10);
    for workers in worker_counts() {
        group.bench_with_input(BenchmarkId::new("discrete_M4_x8", workers), &workers, |b, &w| {
            with_workers(Some(w), || {
                b.iter(|| {
                    map_indexed(8, |r| {
                        let dp = init_random(spec.n_steps(), 4, r as u64).unwrap();
                        optimize_discrete(&spec, &dp, &options).unwrap().final_phi()
                    })
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, propagation, campaign);
criterion_main!(benches);
