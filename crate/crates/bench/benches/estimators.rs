use std::hint::black_box;

use addfit_bench::design_panel;
use addfit_core::simlab::simulation_fit_config;
use addfit_core::varcoef::{fit_theta, make_diff_pair};
use addfit_core::{fit_panel, Method, SmootherPlan};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn smoother(c: &mut Criterion) {
    let mut group = c.benchmark_group("smoother_operator");
    for g in [1000, 3000] {
        let panel = design_panel(g, 0.1);
        let cfg = simulation_fit_config();
        let kernel = cfg.backfit_kernels(&panel).unwrap()[0];
        group.bench_with_input(BenchmarkId::from_parameter(g), &g, |b, _| {
            b.iter(|| {
                let plan = SmootherPlan::new(panel.x(0).to_vec(), kernel).unwrap();
                black_box(plan.operator().unwrap().nonzeros())
            })
        });
    }
    group.finish();
}

fn varcoef(c: &mut Criterion) {
    let panel = design_panel(3000, 0.1);
    let cfg = simulation_fit_config();
    let kernel = cfg.derivative_kernel(&panel).unwrap();
    let grid = cfg.grid.build(&panel.pooled_x()).unwrap();
    let pair = make_diff_pair(&panel, 0, 1).unwrap();
    c.bench_function("fit_theta_g3000", |b| {
        b.iter(|| black_box(fit_theta(&pair, &kernel, &grid)))
    });
}

fn methods(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_panel_g1000");
    group.sample_size(10);
    let panel = design_panel(1000, 0.1);
    let cfg = simulation_fit_config();
    for method in Method::ALL {
        group.bench_function(method.name(), |b| {
            b.iter(|| black_box(fit_panel(&panel, method, &cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, smoother, varcoef, methods);
criterion_main!(benches);
