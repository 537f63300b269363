//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chemostokes::exponents::{psi, rho, run_linear_ladder, run_psi_ladder, threshold_certificate, Termination};
use chemostokes::regularization::property_suite;
use chemostokes::solver::{run, run_in_memory, step_c, FieldState, ModelParams, Potential, RunOutput, SimConfig, Workspace};
use chemostokes::Grid;

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: String) -> Outcome {
    Outcome { pass, summary }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + b.abs())
}

fn threshold_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for _ in 0..1000 {
        let m: f64 = rng.random_range(1.0..3.0);
        if m == 1.0 {
            continue;
        }
        let crit = 9.0 * (m - 1.0);
        let psi_gap = psi(crit, m) - crit;
        let psi_exact = 16.0 * (8.0 * m - 9.0) * (m - 1.0);
        let rho_val = rho(crit, m);
        let rho_exact = crit * (192.0 * m - 215.0);
        worst = worst
            .max((psi_gap - psi_exact).abs() / (1.0 + psi_exact.abs()))
            .max((rho_val - rho_exact).abs() / (1.0 + rho_exact.abs()));
        if !close(psi_gap, psi_exact) || !close(rho_val, rho_exact) {
            bad += 1;
        }
    }
    let flips = !threshold_certificate(9.0 / 8.0 - 1e-12).above_9_8
        && !threshold_certificate(9.0 / 8.0).above_9_8
        && threshold_certificate(9.0 / 8.0 + 1e-12).above_9_8;
    outcome(
        bad == 0 && flips,
        format!("worst scaled identity error {worst:.2e}, {bad} failures, flip at 9/8 {flips}"),
    )
}

fn ladders() -> Outcome {
    let (psi_ok, psi_msg) = match run_psi_ladder(1.25, 1e6) {
        Ok(l) => {
            let steps = l.entries.len() - 1;
            let p0 = l.entries[0].p;
            let bounded = l
                .entries
                .iter()
                .all(|e| e.certificate.gamma_bound.is_some_and(|b| e.p >= b * (1.0 - 1e-12)) && e.p >= p0);
            (
                l.terminated == Termination::ReachedCap && l.last() > 1e6 && steps <= 40 && bounded,
                format!("psi ladder {steps} steps to {:.3e}, Gamma^k bound {bounded}", l.last()),
            )
        }
        Err(e) => (false, format!("psi ladder error: {e}")),
    };
    let (lin_ok, lin_msg) = match run_linear_ladder(4.0 / 3.0, 1.0, 1e6) {
        Ok(l) => {
            let hit = l.entries.iter().find(|e| (e.p - 3.0).abs() < 1e-10).map(|e| e.k);
            (
                hit.is_some_and(|k| k <= 100),
                format!("linear ladder |p-3| < 1e-10 at step {hit:?}"),
            )
        }
        Err(e) => (false, format!("linear ladder error: {e}")),
    };
    outcome(psi_ok && lin_ok, format!("{psi_msg}; {lin_msg}"))
}

fn regularization_suite() -> Outcome {
    let checks = property_suite(10_000, 7);
    let failures: usize = checks.iter().map(|c| c.failures).sum();
    let names: Vec<_> = checks.iter().map(|c| format!("{}={}", c.name, c.failures)).collect();
    outcome(failures == 0, format!("failures {}", names.join(" ")))
}

fn gaussian_config(dt_max: f64) -> SimConfig {
    SimConfig::from_json(&format!(
        r#"{{
        "dim": 2,
        "grid": {{"cells": [64, 64], "extent": [8.0, 8.0]}},
        "model": {{"m": 1.2, "eps": 0.05}},
        "phi": {{"gradient": [0.0, -1.0]}},
        "ic": {{
            "n0": {{"preset": "gaussian", "amplitude": 1.0, "center": [4.0, 4.0], "width": 1.0}},
            "c0": {{"preset": "constant", "value": 1.0}}
        }},
        "time": {{"t_final": 2.0, "dt_max": {dt_max}, "sample_every": 0.1}}
    }}"#
    ))
    .expect("gaussian config")
}

fn two_bumps_config(eps: f64, t_final: f64) -> SimConfig {
    SimConfig::from_json(&format!(
        r#"{{
        "dim": 2,
        "grid": {{"cells": [64, 64], "extent": [8.0, 8.0]}},
        "model": {{"m": 1.2, "eps": {eps}}},
        "phi": {{"gradient": [0.0, -1.0]}},
        "ic": {{
            "n0": {{"preset": "two_bumps", "amplitude": 1.0, "width": 0.8, "mean": 1.0}},
            "c0": {{"preset": "constant", "value": 1.0}}
        }},
        "time": {{"t_final": {t_final}, "dt_max": 2e-3, "sample_every": 0.1}}
    }}"#
    ))
    .expect("two_bumps config")
}

fn conservation(out: &RunOutput) -> Outcome {
    let r = &out.reference;
    let mass_drift = out
        .records
        .iter()
        .map(|x| (x.mass - r.mass0).abs() / r.mass0)
        .fold(0.0, f64::max);
    let mut c_rise: f64 = 0.0;
    let mut prev = r.c_max0;
    for s in &out.samples {
        c_rise = c_rise.max(s.c_max - prev).max(s.step_c_max - r.c_max0);
        prev = s.c_max;
    }
    let n_min = out
        .samples
        .iter()
        .map(|s| s.n_min.min(s.step_n_min))
        .fold(f64::INFINITY, f64::min);
    let div = out.samples.iter().map(|s| s.divergence).fold(0.0, f64::max);
    outcome(
        mass_drift <= 1e-12 && c_rise <= 1e-12 && n_min >= 0.0 && div <= 1e-10,
        format!("mass drift {mass_drift:.2e}, max c rise {c_rise:.2e}, min n {n_min:.3e}, max div {div:.2e}"),
    )
}

fn c_mass_deviation(out: &RunOutput) -> f64 {
    out.records
        .iter()
        .map(|r| (r.c_mass + r.consumed_mass_running - out.reference.c_mass0).abs())
        .fold(0.0, f64::max)
}

fn consumption_identities(out: &RunOutput, halved: Result<RunOutput, String>) -> Outcome {
    let dev = c_mass_deviation(out);
    let bound = 0.5 * out.reference.c_l2sq0 * (1.0 + 1e-6);
    let l2_excess = out
        .records
        .iter()
        .map(|r| 0.5 * r.c_l2sq + r.gradc_l2_running - bound)
        .fold(f64::NEG_INFINITY, f64::max);
    match halved {
        Ok(h) => {
            let dev_half = c_mass_deviation(&h);
            let ratio = dev / dev_half;
            outcome(
                dev <= 1e-3 && (1.7..=2.3).contains(&ratio) && l2_excess <= 0.0,
                format!(
                    "c-mass deviation {dev:.3e} (dt/2: {dev_half:.3e}, ratio {ratio:.3}), L2 inequality margin {:.3e}",
                    -l2_excess
                ),
            )
        }
        Err(e) => outcome(false, format!("halved run failed: {e}")),
    }
}

fn stabilization(out: &RunOutput, grid: &Grid) -> Outcome {
    let rec = &out.records;
    let last = rec.last().unwrap();
    let max_of = |get: fn(&chemostokes::DiagnosticsRecord) -> f64| rec.iter().map(get).fold(0.0, f64::max);
    let n_ratio = last.decay_gap_n / max_of(|r| r.decay_gap_n);
    let c_ratio = last.decay_gap_c / rec[0].decay_gap_c;
    let u_max = max_of(|r| r.decay_gap_u);
    let u_ratio = if u_max > 0.0 { last.decay_gap_u / u_max } else { 0.0 };
    let floor = -grid.domain_volume() / std::f64::consts::E;
    let entropy_min = rec.iter().map(|r| r.entropy).fold(f64::INFINITY, f64::min);
    let w = chemostokes::diagnostics::window_dissipation(rec, 1.0);
    let monotone = w.windows(2).skip(2).all(|p| p[1] <= p[0]);
    outcome(
        n_ratio <= 0.1 && c_ratio <= 0.1 && u_ratio <= 0.1 && entropy_min >= floor && monotone,
        format!(
            "gap ratios n {n_ratio:.2e} c {c_ratio:.2e} u {u_ratio:.2e}, min entropy {entropy_min:.4} (floor {floor:.4}), \
             {} dissipation windows non-increasing after 2: {monotone}",
            w.len()
        ),
    )
}

fn heat_oracle() -> Outcome {
    let len = 1.0;
    let cells = 128;
    let grid = Grid::new(2, &[cells, 1], &[len, len / cells as f64]).unwrap();
    let params = ModelParams::new(2.0, 1.0, 0.1, Potential::Gradient([0.0; 3])).unwrap();
    let mut ws = Workspace::new(&grid);
    let mode: Vec<f64> = (0..cells).map(|i| (PI * grid.center(i)[0] / len).cos()).collect();
    let amplitude = |c: &[f64]| {
        c.iter().zip(&mode).map(|(a, b)| a * b).sum::<f64>() / mode.iter().map(|b| b * b).sum::<f64>()
    };
    let mut state = FieldState::zeros(&grid);
    state.c = mode.iter().map(|m| 1.0 + 0.5 * m).collect();
    let (dt, steps) = (1e-4, 1000);
    let a0 = amplitude(&state.c);
    for _ in 0..steps {
        state.c = step_c(&grid, &params, &state, dt, &mut ws).unwrap().0;
    }
    let rate = -(amplitude(&state.c) / a0).ln() / (dt * steps as f64);
    let exact = (PI / len).powi(2);
    let rel = (rate / exact - 1.0).abs();
    outcome(rel <= 0.02, format!("decay rate {rate:.5} vs {exact:.5}, relative error {rel:.2e}"))
}

fn eps_sweep() -> Outcome {
    let mut finals = Vec::new();
    for eps in [0.1, 0.05, 0.025] {
        match run_in_memory(&two_bumps_config(eps, 5.0)) {
            Ok(out) => finals.push(out.final_state.n),
            Err(e) => return outcome(false, format!("eps = {eps} failed: {e}")),
        }
    }
    let grid = two_bumps_config(0.1, 5.0).grid().unwrap();
    let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * grid.cell_volume();
    let d1 = l1(&finals[0], &finals[1]);
    let d2 = l1(&finals[1], &finals[2]);
    outcome(d2 < d1, format!("L1 distances {d1:.4e} (0.1 vs 0.05), {d2:.4e} (0.05 vs 0.025)"))
}

fn determinism() -> Outcome {
    let cfg = gaussian_config(1e-3);
    let mut texts = Vec::new();
    for threads in [1, 8] {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        if let Err(e) = pool.install(|| run(&cfg, dir.path(), None)) {
            return outcome(false, format!("{threads}-worker run failed: {e}"));
        }
        texts.push(std::fs::read(dir.path().join("diagnostics.csv")).unwrap());
    }
    let same = texts[0] == texts[1];
    outcome(same, format!("diagnostics.csv identical across 1 and 8 workers: {same} ({} bytes)", texts[0].len()))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |k: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let pass = o.pass && took <= limit;
        if !pass {
            failed += 1;
        }
        println!(
            "{} #{k} {name}: {} [{:.2} s, limit {} s]",
            if pass { "PASS" } else { "FAIL" },
            o.summary,
            took.as_secs_f64(),
            limit.as_secs()
        );
    };
    let secs = Duration::from_secs;

    report(1, "threshold algebra", secs(1), &mut threshold_algebra);
    report(2, "bootstrap ladders", secs(1), &mut ladders);
    report(3, "regularization properties", secs(5), &mut regularization_suite);

    let mut gaussian: Option<Result<RunOutput, String>> = None;
    report(4, "conservation and max principle", secs(60), &mut || {
        let out = run_in_memory(&gaussian_config(1e-3)).map_err(|e| e.to_string());
        let o = match &out {
            Ok(out) => conservation(out),
            Err(e) => outcome(false, format!("run failed: {e}")),
        };
        gaussian = Some(out);
        o
    });
    report(5, "consumption identities", secs(180), &mut || match gaussian.take().unwrap() {
        Ok(out) => {
            let halved = run_in_memory(&gaussian_config(5e-4)).map_err(|e| e.to_string());
            consumption_identities(&out, halved)
        }
        Err(e) => outcome(false, format!("reference run failed: {e}")),
    });
    report(6, "stabilization", secs(300), &mut || {
        let cfg = two_bumps_config(0.05, 20.0);
        match run_in_memory(&cfg) {
            Ok(out) => stabilization(&out, &cfg.grid().unwrap()),
            Err(e) => outcome(false, format!("run failed: {e}")),
        }
    });
    report(7, "heat equation oracle", secs(30), &mut heat_oracle);
    report(8, "eps sweep Cauchy check", secs(600), &mut eps_sweep);
    report(9, "determinism across workers", secs(120), &mut determinism);

    if failed == 0 {
        println!("acceptance: all 9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 9 criteria failed");
        ExitCode::FAILURE
    }
}
