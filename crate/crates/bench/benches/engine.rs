use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ltransport::{
    check_axioms, coefficients_from_matrix, holonomy, solve_fundamental, sphere_latitude_loop, tangent_bundle_preset,
};
use ltransport_bench::{cubic_field, unit_interval};

fn fundamental_solution(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_fundamental");
    for n in [2, 4, 8] {
        let g = cubic_field(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| solve_fundamental(g, 0.0, unit_interval(), 1e-3).unwrap())
        });
    }
    group.finish();
}

fn axioms(c: &mut Criterion) {
    let sol = solve_fundamental(&cubic_field(4), 0.0, unit_interval(), 1e-3).unwrap();
    c.bench_function("check_axioms/100", |b| b.iter(|| check_axioms(&sol, 100, 1).unwrap()));
}

fn extraction(c: &mut Criterion) {
    let sol = solve_fundamental(&cubic_field(4), 0.0, unit_interval(), 1e-3).unwrap();
    c.bench_function("coefficients_from_matrix", |b| {
        b.iter(|| coefficients_from_matrix(&sol, 0.37, 1e-4).unwrap())
    });
}

fn sphere_holonomy(c: &mut Criterion) {
    let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
    let lp = sphere_latitude_loop(PI / 3.0).unwrap();
    c.bench_function("holonomy/sphere_latitude", |b| {
        b.iter(|| holonomy(&field, &lp, 1e-3).unwrap())
    });
}

criterion_group!(benches, fundamental_solution, axioms, extraction, sphere_holonomy);
criterion_main!(benches);
