use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use ctr_bench::pushert_fixture;
use ctr_core::cqdc::{rollout_nonsmooth, step_nonsmooth, step_smoothed};
use ctr_core::planner::{mpc_rollout, sub_trajopt};
use ctr_core::sensitivity::{linearize, QMode};

fn dynamics(c: &mut Criterion) {
    let f = pushert_fixture();
    let sys = &f.scenario.system;
    let kappa = f.scenario.params.kappa;
    c.bench_function("step_nonsmooth/pushert", |b| b.iter(|| step_nonsmooth(sys, black_box(&f.q), black_box(&f.u)).unwrap()));
    c.bench_function("step_smoothed/pushert", |b| b.iter(|| step_smoothed(sys, black_box(&f.q), black_box(&f.u), kappa).unwrap()));
    for (name, mode) in [("fd", QMode::FiniteDifference), ("frozen", QMode::FrozenGeometry), ("skip", QMode::Skip)] {
        c.bench_function(&format!("linearize_{name}/pushert"), |b| b.iter(|| linearize(sys, black_box(&f.q), &f.u, kappa, mode).unwrap()));
    }
}

fn planning(c: &mut Criterion) {
    let f = pushert_fixture();
    let sys = &f.scenario.system;
    let p = &f.scenario.params;
    let u_nom = vec![f.u.clone(); p.horizon];
    let q_nom = rollout_nonsmooth(sys, &f.q, &u_nom).unwrap();
    let u_prev = sys.robot_part(&f.q);
    c.bench_function("sub_trajopt/pushert", |b| b.iter(|| sub_trajopt(sys, &q_nom, &u_nom, black_box(&f.goal), &u_prev, p).unwrap()));
    let mut g = c.benchmark_group("mpc");
    g.sample_size(10);
    g.bench_function("mpc_rollout/pushert", |b| b.iter(|| mpc_rollout(sys, &f.q, black_box(&f.goal), p, false).unwrap()));
    g.finish();
}

criterion_group!(benches, dynamics, planning);
criterion_main!(benches);
