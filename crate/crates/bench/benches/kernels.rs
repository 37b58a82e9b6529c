use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use ssam_bench::{net_fixture, GapFixture, ReluFixture};
use ssam_core::optimizer::{sgd_init, sgd_step, ssam_init, ssam_step};
use ssam_core::relu::{self, NetArch};

fn steps(c: &mut Criterion) {
    let fx = ReluFixture::new(NetArch::new(2, 10, 1).unwrap(), 2000, 1).unwrap();
    let mut group = c.benchmark_group("step/relu_2_10_1");
    group.bench_function("ssam", |b| {
        let mut oracle = fx.oracle().unwrap();
        let mut state = Some(ssam_init(&fx.problem.start, oracle.as_mut(), &fx.params, &fx.problem.set).unwrap());
        b.iter(|| {
            let s = state.take().unwrap();
            let (next, row) = ssam_step(s, oracle.as_mut(), &fx.params, &fx.problem.set);
            state = Some(next);
            black_box(row)
        });
    });
    group.bench_function("sgd", |b| {
        let mut oracle = fx.oracle().unwrap();
        let mut state = Some(sgd_init(&fx.problem.start, oracle.as_ref(), &fx.problem.set).unwrap());
        b.iter(|| {
            let s = state.take().unwrap();
            let (next, row) = sgd_step(s, oracle.as_mut(), &fx.params, &fx.problem.set);
            state = Some(next);
            black_box(row)
        });
    });
    group.finish();
}

fn gap(c: &mut Criterion) {
    let mut group = c.benchmark_group("gap/eta");
    for dim in [10, 141, 1000] {
        let fx = GapFixture::new(dim, 64, 0).unwrap();
        group.bench_function(format!("dim_{dim}"), |b| {
            let mut i = 0;
            b.iter(|| {
                let (x, z) = &fx.points[i % fx.points.len()];
                i += 1;
                ssam_core::eta(x, z, fx.beta, &fx.set).unwrap()
            });
        });
    }
    group.finish();
}

fn network(c: &mut Criterion) {
    let mut group = c.benchmark_group("relu");
    for (depth, width) in [(2, 10), (3, 32)] {
        let arch = NetArch::new(depth, width, 1).unwrap();
        let (sample, params) = net_fixture(arch, 0).unwrap();
        group.bench_function(format!("forward/{depth}x{width}"), |b| {
            b.iter(|| relu::forward(black_box(&sample), &params).unwrap())
        });
        group.bench_function(format!("subgradient/{depth}x{width}"), |b| {
            b.iter(|| relu::sample_subgrad(black_box(&sample), &params).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, steps, gap, network);
criterion_main!(benches);
