use criterion::{black_box, criterion_group, criterion_main, Criterion};

use chemostokes::exponents::{run_linear_ladder, run_psi_ladder};
use chemostokes::solver::{
    hydrostatic_pressure, init_state, project_initial, step, DtPolicy, SimConfig, VelocityInit, Workspace,
};

fn reference_config(cells: usize) -> SimConfig {
    SimConfig::from_json(&format!(
        r#"{{
        "dim": 2,
        "grid": {{"cells": [{cells}, {cells}], "extent": [8.0, 8.0]}},
        "model": {{"m": 1.2, "eps": 0.05}},
        "phi": {{"gradient": [0.0, -1.0]}},
        "ic": {{
            "n0": {{"preset": "two_bumps", "amplitude": 1.0, "width": 0.8, "mean": 1.0}},
            "c0": {{"preset": "constant", "value": 1.0}}
        }},
        "time": {{"t_final": 1.0, "dt_max": 2e-3, "sample_every": 0.1}}
    }}"#
    ))
    .unwrap()
}

fn bench_step(c: &mut Criterion) {
    for cells in [32, 64] {
        let cfg = reference_config(cells);
        let grid = cfg.grid().unwrap();
        let params = cfg.model_params().unwrap();
        let state = init_state(&params, &grid, &cfg.ic, cfg.seed).unwrap();
        let mut ws = Workspace::new(&grid);
        c.bench_function(&format!("split_step_{cells}x{cells}"), |b| {
            b.iter(|| step(&grid, &params, black_box(&state), 2e-3, DtPolicy::Adaptive, &mut ws).unwrap())
        });
    }
}

fn bench_pressure(c: &mut Criterion) {
    let cfg = reference_config(64);
    let grid = cfg.grid().unwrap();
    let params = cfg.model_params().unwrap();
    let state = init_state(&params, &grid, &cfg.ic, cfg.seed).unwrap();
    let mut ws = Workspace::new(&grid);
    c.bench_function("hydrostatic_pressure_64x64", |b| {
        b.iter(|| hydrostatic_pressure(&grid, &params, black_box(&state.n), &mut ws).unwrap())
    });
    let vortex = VelocityInit::Vortex { amplitude: 0.1 }.evaluate(&grid);
    c.bench_function("projection_64x64", |b| {
        b.iter(|| {
            let mut u = vortex.clone();
            u[0].iter_mut().for_each(|v| *v *= 1.01);
            project_initial(&grid, &mut u, &mut ws).unwrap()
        })
    });
}

fn bench_ladders(c: &mut Criterion) {
    c.bench_function("psi_ladder_m1.25", |b| b.iter(|| run_psi_ladder(black_box(1.25), 1e6).unwrap()));
    c.bench_function("linear_ladder_m4/3", |b| {
        b.iter(|| run_linear_ladder(black_box(4.0 / 3.0), 1.0, 1e6).unwrap())
    });
}

criterion_group!(benches, bench_step, bench_pressure, bench_ladders);
criterion_main!(benches);
