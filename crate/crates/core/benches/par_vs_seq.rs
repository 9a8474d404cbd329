//! Parallel vs sequential throughput on the two data-parallel hot paths:
//! the per-state proximal sweep and Monte-Carlo replicate fan-out.
//!
//! Run with the default features for the rayon path; the `*_seq` benches
//! always use the sequential fallback, so one run shows both.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use autoexplore_core::instances::gen_garnet;
use autoexplore_core::mdp::{Policy, QFunction, Regularizer};
use autoexplore_core::mirror::{spmd_step, DistanceGenerator};
use autoexplore_core::sampler::{dynamic_mixing_collect, SampleStream};
use autoexplore_core::{par, rng};

fn sweep_inputs(n_states: usize, n_actions: usize) -> (Policy, QFunction) {
    let mut r = rng::make_rng(0, 0);
    let rows: Vec<Vec<f64>> =
        (0..n_states).map(|_| rng::sample_simplex(&mut r, n_actions)).collect();
    let pi = Policy::from_rows(n_states, n_actions, rows).unwrap();
    let q = QFunction::from_values(
        n_states,
        n_actions,
        (0..n_states * n_actions).map(|_| rand::Rng::random::<f64>(&mut r)).collect(),
    );
    (pi, q)
}

fn bench_spmd_sweep(c: &mut Criterion) {
    let (pi, q) = sweep_inputs(512, 8);
    let dgf = DistanceGenerator::tsallis(0.4).unwrap();
    let h = Regularizer::None;
    let run_with = |map: &dyn Fn(usize) -> Vec<Result<Vec<f64>, autoexplore_core::CoreError>>| {
        let rows = map(pi.n_states());
        black_box(rows.into_iter().map(|r| r.unwrap()).collect::<Vec<_>>())
    };
    let mut group = c.benchmark_group("spmd_sweep_512x8");
    group.bench_function("parallel", |b| {
        b.iter(|| run_with(&|n| par::map_indices(n, |s| spmd_step(pi.row(s), q.row(s), &h, 0.5, dgf))))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            run_with(&|n| par::map_indices_seq(n, |s| spmd_step(pi.row(s), q.row(s), &h, 0.5, dgf)))
        })
    });
    group.finish();
}

fn bench_replicate_fanout(c: &mut Criterion) {
    let mdp = gen_garnet(6, 3, 6, 0, 0.8).unwrap();
    let pi = Policy::uniform(6, 3);
    let replicate = |seed: usize| {
        let mut stream = SampleStream::new(&mdp, seed as u64);
        let out = dynamic_mixing_collect(&mut stream, &pi, 0.05, 1e-3).unwrap();
        out.q.linf_norm()
    };
    let mut group = c.benchmark_group("monte_carlo_replicates_x64");
    group.bench_function("parallel", |b| {
        b.iter_batched(
            || (),
            |_| black_box(par::map_indices(64, replicate)),
            BatchSize::SmallInput,
        )
    });
    group.bench_function("sequential", |b| {
        b.iter_batched(
            || (),
            |_| black_box(par::map_indices_seq(64, replicate)),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_spmd_sweep, bench_replicate_fanout);
criterion_main!(benches);
