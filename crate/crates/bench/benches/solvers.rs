use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ispo_bench::{convex_adjust, desk_coefficients, desk_instance, desk_supply, table3};
use ispo_core::bounds::BoundTable;
use ispo_core::field::{null_counts, wilcoxon_signed_rank};
use ispo_core::pingpong::{solve_pingpong, PingPongParams};
use ispo_core::sop::{sfa_heuristic, SfaParams};
use ispo_core::trajectory::{enumerate_trajectories, instance_trajectories};
use ispo_core::{simulate_sales, solve_pop_exact, trajectory_count};

fn trajectories(c: &mut Criterion) {
    c.bench_function("trajectory_count 13x5", |b| b.iter(|| trajectory_count(black_box(13), 5)));
    c.bench_function("enumerate 13x4 observ 2", |b| {
        b.iter(|| enumerate_trajectories(black_box(13), 4, 2))
    });
}

fn price_stage(c: &mut Criterion) {
    let inst = desk_instance(1);
    let supply = desk_supply(&inst);
    let trajs = instance_trajectories(&inst);
    let mut group = c.benchmark_group("price stage");
    group.sample_size(10);
    group.bench_function("simulate_sales", |b| {
        b.iter(|| simulate_sales(&supply, 1, &trajs[trajs.len() / 2], &inst).unwrap())
    });
    group.bench_function("pop exact", |b| b.iter(|| solve_pop_exact(&supply, &inst).unwrap()));
    group.bench_function("bound table", |b| b.iter(|| BoundTable::compute(&inst, &trajs).unwrap()));
    group.finish();
}

fn size_stage(c: &mut Criterion) {
    let inst = desk_instance(2);
    let coeffs = desk_coefficients(&inst);
    let sfa = SfaParams::default();
    let problem = convex_adjust(30, 4, 6);
    let mut group = c.benchmark_group("size stage");
    group.sample_size(10);
    group.bench_function("sfa", |b| b.iter(|| sfa_heuristic(&coeffs, &inst, &sfa).unwrap()));
    group.bench_function("adjust relaxed 30x4x6", |b| b.iter(|| problem.solve_relaxed().unwrap()));
    group.bench_function("adjust integral 30x4x6", |b| b.iter(|| problem.solve_integral().unwrap()));
    group.bench_function("pingpong", |b| {
        b.iter(|| solve_pingpong(&inst, &PingPongParams::default()).unwrap())
    });
    group.finish();
}

fn statistics(c: &mut Criterion) {
    let diffs = table3();
    c.bench_function("wilcoxon n=30", |b| b.iter(|| wilcoxon_signed_rank(black_box(&diffs)).unwrap()));
    c.bench_function("null counts n=64", |b| b.iter(|| null_counts(black_box(64))));
}

criterion_group!(benches, trajectories, price_stage, size_stage, statistics);
criterion_main!(benches);
