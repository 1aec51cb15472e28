use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use gridsparse::synth::random_instance;
use gridsparse::{
    build_problem, solve_bnb, solve_exhaustive, solve_heuristic, solve_lp_relaxation, MethodParams,
    SolveLimits, Variant,
};
use gridsparse_bench::{room_grid, scene};

fn small_exact(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact");
    for n in [8usize, 12, 16] {
        let p = random_instance(7, n, 6, Variant::Ours2D);
        g.bench_with_input(BenchmarkId::new("bnb", n), &p, |b, p| {
            b.iter(|| solve_bnb(black_box(p), &SolveLimits::default()).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("exhaustive", n), &p, |b, p| {
            b.iter(|| solve_exhaustive(black_box(p)).unwrap())
        });
    }
    g.finish();
}

fn relaxation(c: &mut Criterion) {
    let map = scene(2000, 40);
    let mut g = c.benchmark_group("heuristic");
    g.sample_size(10);
    for v in [Variant::Lp, Variant::Ours2D, Variant::Ours3D] {
        let params = MethodParams {
            grid3d: Some(room_grid(0.5)),
            ..MethodParams::new(v)
        };
        let p = build_problem(&map, &params).unwrap();
        g.bench_with_input(BenchmarkId::new("relax", v), &p, |b, p| {
            b.iter(|| solve_lp_relaxation(black_box(p)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("relax+round", v), &p, |b, p| {
            b.iter(|| solve_heuristic(black_box(p), &SolveLimits::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, small_exact, relaxation);
criterion_main!(benches);
