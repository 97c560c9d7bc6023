use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use stirap_bench::reference;
use stirap_core::{solve_sp, SpSolution};

fn newton(c: &mut Criterion) {
    let (params, protocol) = reference(0.2, 0.0202);
    let seed = SpSolution::source_seed(3, 20.0, 0.0);
    c.bench_function("newton_seed_solve", |b| {
        b.iter(|| solve_sp(black_box(&seed), 0.0, &params, &protocol).unwrap())
    });
}

fn continuation(c: &mut Criterion) {
    let (params, protocol) = reference(0.2, 0.0202);
    let mut g = c.benchmark_group("continuation");
    g.sample_size(10);
    g.bench_function("ssp_branch_step_0.01", |b| b.iter(|| stirap_bench::branch(&params, &protocol)));
    g.finish();
}

criterion_group!(benches, newton, continuation);
criterion_main!(benches);
