use criterion::{criterion_group, criterion_main, Criterion};

use thinphase_bench::cone_problem;
use thinphase_core::cones::{minimize_cone, AngularField, AngularMesh, ConeOptions};
use thinphase_core::energy::total_energy;
use thinphase_core::harmonic::{solve_slit, DEFAULT_TOL};
use thinphase_core::minimize::{minimize, MinimizeOptions};
use thinphase_core::weiss::weiss_profile;
use thinphase_core::{Region, TrivialCone};

fn harmonic(c: &mut Criterion) {
    let (grid, g, mask) = cone_problem(1, 1.0 / 64.0);
    c.bench_function("solve_slit n1 h1/64", |b| {
        b.iter(|| solve_slit(&grid, &mask, &g, DEFAULT_TOL).unwrap())
    });
    let (grid, g, mask) = cone_problem(2, 1.0 / 16.0);
    c.bench_function("solve_slit n2 h1/16", |b| {
        b.iter(|| solve_slit(&grid, &mask, &g, DEFAULT_TOL).unwrap())
    });
}

fn minimizer(c: &mut Criterion) {
    let (grid, g, _) = cone_problem(1, 1.0 / 32.0);
    let opts = MinimizeOptions::default();
    let mut group = c.benchmark_group("minimize");
    group.sample_size(10);
    group.bench_function("n1 h1/32", |b| {
        b.iter(|| minimize(&grid, &g, None, &opts).unwrap())
    });
    group.finish();
}

fn diagnostics(c: &mut Criterion) {
    let (_, g, mask) = cone_problem(1, 1.0 / 128.0);
    c.bench_function("total_energy n1 h1/128", |b| {
        b.iter(|| total_energy(&g, &mask, &Region::Whole).unwrap())
    });
    let radii: Vec<f64> = (0..7).map(|k| 0.2 + 0.1 * k as f64).collect();
    c.bench_function("weiss_profile n1 h1/128", |b| {
        b.iter(|| weiss_profile(&g, &mask, &[0.0], &radii).unwrap())
    });
}

fn cones(c: &mut Criterion) {
    let mesh = AngularMesh::hemisphere(16, 64).unwrap();
    let start = AngularField::from_field(mesh, &TrivialCone::minimal(2)).unwrap();
    let opts = ConeOptions::default();
    let mut group = c.benchmark_group("cones");
    group.sample_size(10);
    group.bench_function("minimize_cone 16x64", |b| {
        b.iter(|| minimize_cone(&start, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, harmonic, minimizer, diagnostics, cones);
criterion_main!(benches);
