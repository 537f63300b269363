//! Finite-volume discretization of the regularized chemotaxis-Stokes system.
//!
//! One time step is a Lie splitting `u -> c -> n`:
//!
//! * `u`: incremental pressure-correction projection on the MAC grid. Implicit
//!   viscous predictor with the buoyancy `n grad(phi)` minus the previous
//!   pressure gradient on faces, Neumann Poisson solve for the increment,
//!   correction. A gradient force is balanced exactly by the pressure, so a
//!   fluid at rest stays at rest.
//! * `c`: explicit first-order upwind transport, then an implicit
//!   diffusion/consumption solve whose matrix is an M-matrix.
//! * `n`: explicit conservative update with arithmetic-mean face diffusivity and
//!   upwinded chemotactic and advective fluxes; walls carry zero total flux.

mod config;
mod initial;
mod run;
mod snapshot;

pub use config::{
    CheckOptions, DiagnosticsOptions, GridConfig, IcConfig, ModelConfig, OutputConfig, PhiConfig,
    SimConfig, TimeConfig,
};
pub use initial::{init_state, ScalarInit, VelocityInit};
pub use run::{evaluate_checks, run, run_in_memory, Reference, RunOutput, SampleInfo, Simulation};
pub use snapshot::{
    read_field, read_manifest, write_field, FileEntry, Manifest, SnapshotEntry, SnapshotHeader,
    MAGIC, SNAPSHOT_VERSION,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{
    pcg, remove_mean, CellOperator, FaceOperator, Jacobi, NeumannSpectral, SolveStats,
};
use crate::par;
use crate::regularization::RegularizationFamily;

/// Gravitational-type potential driving the fluid.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// Linear potential with constant gradient.
    Gradient([f64; 3]),
    /// Cell-centered values of the potential.
    Field(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub family: RegularizationFamily,
    pub potential: Potential,
}

impl ModelParams {
    pub fn new(m: f64, k_d: f64, eps: f64, potential: Potential) -> Result<Self> {
        if let Potential::Gradient(g) = &potential {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("phi.gradient must be finite".into()));
            }
        }
        Ok(Self {
            family: RegularizationFamily::new(eps, m, k_d)?,
            potential,
        })
    }

    #[inline]
    fn phi_slope(&self, grid: &Grid, axis: usize, lo: usize, hi: usize) -> f64 {
        match &self.potential {
            Potential::Gradient(g) => g[axis],
            Potential::Field(phi) => (phi[hi] - phi[lo]) / grid.spacing()[axis],
        }
    }
}

/// Discrete unknowns at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub n: Vec<f64>,
    pub c: Vec<f64>,
    /// Face-centered velocity components; `u[2]` is empty in 2D.
    pub u: [Vec<f64>; 3],
    pub p: Vec<f64>,
}

impl FieldState {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.n_cells();
        Self {
            t: 0.0,
            n: vec![0.0; n],
            c: vec![0.0; n],
            u: [
                vec![0.0; grid.n_faces(0)],
                vec![0.0; grid.n_faces(1)],
                vec![0.0; grid.n_faces(2)],
            ],
            p: vec![0.0; n],
        }
    }
}

/// Cell-wise discrete divergence of a face field.
pub fn divergence(grid: &Grid, u: &[Vec<f64>; 3], out: &mut [f64]) {
    let h = grid.spacing();
    par::fill(out, |idx| {
        let c = grid.coords(idx);
        let mut d = 0.0;
        for a in 0..grid.dim() {
            let lo = grid.face_idx(a, c[0], c[1], c[2]);
            let hi = lo + grid.face_stride(a, a);
            d += (u[a][hi] - u[a][lo]) / h[a];
        }
        d
    });
}

pub fn max_abs_divergence(grid: &Grid, u: &[Vec<f64>; 3]) -> f64 {
    let mut div = vec![0.0; grid.n_cells()];
    divergence(grid, u, &mut div);
    par::max(div.len(), |i| div[i].abs())
}

/// Tolerances and limits of the linear solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub viscous_rtol: f64,
    pub pressure_rtol: f64,
    pub concentration_rtol: f64,
    pub max_iterations: usize,
    pub divergence_tol: f64,
    pub cfl_safety: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            viscous_rtol: 1e-10,
            pressure_rtol: 1e-10,
            // the max principle is checked to 1e-12, so the c solve must beat it
            concentration_rtol: 1e-14,
            max_iterations: 10_000,
            divergence_tol: 1e-10,
            cfl_safety: 0.9,
        }
    }
}

/// Reusable solver state (transform plans, settings).
pub struct Workspace {
    spectral: NeumannSpectral,
    pub settings: SolverSettings,
}

impl Workspace {
    pub fn new(grid: &Grid) -> Self {
        Self {
            spectral: NeumannSpectral::new(grid),
            settings: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProjectionInfo {
    pub viscous: [SolveStats; 3],
    pub pressure: SolveStats,
    pub divergence: f64,
}

/// Projects a face field onto the discretely divergence-free space in place:
/// `u <- u - scale * grad P` with `-Lap P = -div(u) / scale`. `p` is the warm
/// start and receives the mean-free pressure.
fn project(
    grid: &Grid,
    u: &mut [Vec<f64>; 3],
    p: &mut [f64],
    scale: f64,
    ws: &mut Workspace,
) -> Result<(SolveStats, f64)> {
    let mut rhs = vec![0.0; grid.n_cells()];
    divergence(grid, u, &mut rhs);
    // -Lap P = -div/scale
    par::update(&mut rhs, |_, d| -d / scale);
    remove_mean(&mut rhs);
    let op = CellOperator {
        grid,
        identity: 0.0,
        dt: 1.0,
        reaction: None,
    };
    let stats = pcg(
        "pressure",
        &op,
        &mut ws.spectral,
        &rhs,
        p,
        ws.settings.pressure_rtol,
        ws.settings.max_iterations,
    )?;
    remove_mean(p);
    let h = grid.spacing();
    for a in 0..grid.dim() {
        let s = grid.stride(a);
        par::update(&mut u[a], |f, v| {
            let fc = grid.face_coords(a, f);
            if grid.is_boundary_face(a, fc) {
                return 0.0;
            }
            let hi = grid.idx(fc[0], fc[1], fc[2]);
            v - scale * (p[hi] - p[hi - s]) / h[a]
        });
    }
    let div = max_abs_divergence(grid, u);
    if div > ws.settings.divergence_tol {
        return Err(Error::Divergence(div));
    }
    Ok((stats, div))
}

/// Removes the gradient part of `u`, leaving it discretely solenoidal.
pub fn project_initial(grid: &Grid, u: &mut [Vec<f64>; 3], ws: &mut Workspace) -> Result<f64> {
    let mut p = vec![0.0; grid.n_cells()];
    Ok(project(grid, u, &mut p, 1.0, ws)?.1)
}

/// Pressure balancing the buoyancy of `n`: the gradient part of `n grad(phi)`.
pub fn hydrostatic_pressure(grid: &Grid, params: &ModelParams, n: &[f64], ws: &mut Workspace) -> Result<Vec<f64>> {
    let mut force: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for a in 0..grid.dim() {
        let s = grid.stride(a);
        let mut f = vec![0.0; grid.n_faces(a)];
        par::fill(&mut f, |idx| {
            let fc = grid.face_coords(a, idx);
            if grid.is_boundary_face(a, fc) {
                return 0.0;
            }
            let hi = grid.idx(fc[0], fc[1], fc[2]);
            let lo = hi - s;
            0.5 * (n[lo] + n[hi]) * params.phi_slope(grid, a, lo, hi)
        });
        force[a] = f;
    }
    let mut p = vec![0.0; grid.n_cells()];
    project(grid, &mut force, &mut p, 1.0, ws)?;
    Ok(p)
}

/// Stokes step: returns `(u_new, P_new, info)`. `state.p` is the pressure of
/// the previous step; only its increment is solved for.
pub fn step_u(
    grid: &Grid,
    params: &ModelParams,
    state: &FieldState,
    dt: f64,
    ws: &mut Workspace,
) -> Result<([Vec<f64>; 3], Vec<f64>, ProjectionInfo)> {
    if !(dt > 0.0) {
        return Err(Error::domain("dt", dt, "dt > 0"));
    }
    let mut info = ProjectionInfo::default();
    let mut u_star: [Vec<f64>; 3] = state.u.clone();
    let n = &state.n;
    let p_old = &state.p;
    let h = grid.spacing();
    for a in 0..grid.dim() {
        let s = grid.stride(a);
        let mut rhs = vec![0.0; grid.n_faces(a)];
        let u_old = &state.u[a];
        par::fill(&mut rhs, |f| {
            let fc = grid.face_coords(a, f);
            if grid.is_boundary_face(a, fc) {
                return 0.0;
            }
            let hi = grid.idx(fc[0], fc[1], fc[2]);
            let lo = hi - s;
            let force = 0.5 * (n[lo] + n[hi]) * params.phi_slope(grid, a, lo, hi);
            u_old[f] + dt * (force - (p_old[hi] - p_old[lo]) / h[a])
        });
        let op = FaceOperator { grid, axis: a, dt };
        info.viscous[a] = pcg(
            "viscous",
            &op,
            &mut Jacobi::new(&op),
            &rhs,
            &mut u_star[a],
            ws.settings.viscous_rtol,
            ws.settings.max_iterations,
        )?;
    }
    let mut phi = vec![0.0; grid.n_cells()];
    let (pressure, div) = project(grid, &mut u_star, &mut phi, dt, ws)?;
    let mut p: Vec<f64> = p_old.iter().zip(&phi).map(|(a, b)| a + b).collect();
    remove_mean(&mut p);
    info.pressure = pressure;
    info.divergence = div;
    Ok((u_star, p, info))
}

/// Outflow rate `sum_faces max(u_out, 0) / h` of cell `idx`.
#[inline]
fn advective_outflow(grid: &Grid, u: &[Vec<f64>; 3], idx: usize) -> f64 {
    let c = grid.coords(idx);
    let h = grid.spacing();
    let mut rate = 0.0;
    for a in 0..grid.dim() {
        let lo = grid.face_idx(a, c[0], c[1], c[2]);
        let hi = lo + grid.face_stride(a, a);
        rate += (u[a][hi].max(0.0) + (-u[a][lo]).max(0.0)) / h[a];
    }
    rate
}

fn cell_label(grid: &Grid, idx: usize) -> String {
    let c = grid.coords(idx);
    if grid.dim() == 2 {
        format!("cell ({}, {})", c[0], c[1])
    } else {
        format!("cell ({}, {}, {})", c[0], c[1], c[2])
    }
}

const AXIS: [char; 3] = ['x', 'y', 'z'];

/// Largest stable `dt` for the transport part of the `c` update.
pub fn c_stable_dt(grid: &Grid, u: &[Vec<f64>; 3]) -> f64 {
    1.0 / par::max(grid.n_cells(), |i| advective_outflow(grid, u, i)).max(f64::MIN_POSITIVE)
}

/// Oxygen step on `state.c` with the velocity `state.u` and consumption `F(state.n)`.
pub fn step_c(
    grid: &Grid,
    params: &ModelParams,
    state: &FieldState,
    dt: f64,
    ws: &mut Workspace,
) -> Result<(Vec<f64>, SolveStats)> {
    let u = &state.u;
    let c = &state.c;
    let worst = (0..grid.n_cells())
        .map(|i| (i, advective_outflow(grid, u, i)))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if dt * worst.1 > 1.0 + 1e-12 {
        return Err(Error::Cfl {
            face: format!("{} (advective outflow)", cell_label(grid, worst.0)),
            dt,
            bound: 1.0 / worst.1,
        });
    }
    let h = grid.spacing();
    let mut c_adv = vec![0.0; grid.n_cells()];
    par::fill(&mut c_adv, |idx| {
        let cc = grid.coords(idx);
        let mut div_flux = 0.0;
        for a in 0..grid.dim() {
            let s = grid.stride(a);
            let lo = grid.face_idx(a, cc[0], cc[1], cc[2]);
            let hi = lo + grid.face_stride(a, a);
            let flux = |f: usize, left: Option<usize>, right: Option<usize>| {
                let v = u[a][f];
                match (left, right) {
                    (Some(l), Some(r)) => v * if v > 0.0 { c[l] } else { c[r] },
                    _ => 0.0,
                }
            };
            let left_of_lo = (cc[a] > 0).then(|| idx - s);
            let right_of_hi = (cc[a] + 1 < grid.cells()[a]).then(|| idx + s);
            div_flux += (flux(hi, Some(idx), right_of_hi) - flux(lo, left_of_lo, Some(idx))) / h[a];
        }
        c[idx] - dt * div_flux
    });
    let family = &params.family;
    let reaction: Vec<f64> = state.n.iter().map(|&n| family.f(n)).collect();
    let op = CellOperator {
        grid,
        identity: 1.0,
        dt,
        reaction: Some(&reaction),
    };
    let mut c_new = c_adv.clone();
    let stats = pcg(
        "concentration",
        &op,
        &mut Jacobi::new(&op),
        &c_adv,
        &mut c_new,
        ws.settings.concentration_rtol,
        ws.settings.max_iterations,
    )?;
    let scale = par::max(c_adv.len(), |i| c_adv[i].abs()).max(0.0);
    for v in c_new.iter_mut() {
        if *v < 0.0 {
            // round-off of the solve around vacuum; the exact solution is >= 0
            if *v < -1e-12 * scale {
                return Err(Error::Invariant("c >= 0", format!("c = {v:e}")));
            }
            *v = 0.0;
        }
    }
    Ok((c_new, stats))
}

/// Per-cell stable-step rates of the explicit `n` update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NRates {
    pub diffusive: f64,
    pub drift: f64,
    pub advective: f64,
}

impl NRates {
    pub fn total(&self) -> f64 {
        self.diffusive + self.drift + self.advective
    }
}

struct NCoefficients {
    diffusivity: Vec<f64>,
    chi: Vec<f64>,
}

fn n_coefficients(family: &RegularizationFamily, n: &[f64]) -> NCoefficients {
    let mut diffusivity = vec![0.0; n.len()];
    par::fill(&mut diffusivity, |i| family.d_eps_unchecked(n[i].max(0.0)));
    let chi = n.iter().map(|&v| family.chi(v)).collect();
    NCoefficients { diffusivity, chi }
}

fn n_rates_at(grid: &Grid, coef: &NCoefficients, state: &FieldState, idx: usize) -> (NRates, [f64; 6]) {
    let cc = grid.coords(idx);
    let h = grid.spacing();
    let c = &state.c;
    let u = &state.u;
    let mut r = NRates::default();
    let mut per_face = [0.0; 6];
    for a in 0..grid.dim() {
        let s = grid.stride(a);
        let w2 = 1.0 / (h[a] * h[a]);
        let lo = grid.face_idx(a, cc[0], cc[1], cc[2]);
        let hi = lo + grid.face_stride(a, a);
        if cc[a] > 0 {
            let nb = idx - s;
            let d = 0.5 * (coef.diffusivity[idx] + coef.diffusivity[nb]) * w2;
            let drift = (-(c[idx] - c[nb]) / h[a]).max(0.0) * coef.chi[idx] / h[a];
            let adv = (-u[a][lo]).max(0.0) / h[a];
            r.diffusive += d;
            r.drift += drift;
            r.advective += adv;
            per_face[2 * a] = d + drift + adv;
        }
        if cc[a] + 1 < grid.cells()[a] {
            let nb = idx + s;
            let d = 0.5 * (coef.diffusivity[idx] + coef.diffusivity[nb]) * w2;
            let drift = ((c[nb] - c[idx]) / h[a]).max(0.0) * coef.chi[idx] / h[a];
            let adv = u[a][hi].max(0.0) / h[a];
            r.diffusive += d;
            r.drift += drift;
            r.advective += adv;
            per_face[2 * a + 1] = d + drift + adv;
        }
    }
    (r, per_face)
}

/// Maximum over cells of the positivity rates, component-wise and combined.
pub fn n_rate_maxima(grid: &Grid, params: &ModelParams, state: &FieldState) -> (NRates, f64) {
    let coef = n_coefficients(&params.family, &state.n);
    let rates: Vec<NRates> = (0..grid.n_cells())
        .into_par_iter()
        .map(|i| n_rates_at(grid, &coef, state, i).0)
        .collect();
    rates.iter().fold((NRates::default(), 0.0), |(m, t), r| {
        (
            NRates {
                diffusive: m.diffusive.max(r.diffusive),
                drift: m.drift.max(r.drift),
                advective: m.advective.max(r.advective),
            },
            f64::max(t, r.total()),
        )
    })
}

/// Density step using `state.c` and `state.u`; conserves `sum n * vol` and
/// keeps `n >= 0` whenever `dt * rate <= 1` in every cell.
pub fn step_n(grid: &Grid, params: &ModelParams, state: &FieldState, dt: f64) -> Result<Vec<f64>> {
    let n = &state.n;
    let c = &state.c;
    let u = &state.u;
    let coef = n_coefficients(&params.family, n);
    let nc = grid.n_cells();

    let worst = (0..nc)
        .map(|i| (i, n_rates_at(grid, &coef, state, i)))
        .fold(None::<(usize, (NRates, [f64; 6]))>, |acc, x| match acc {
            Some(a) if a.1 .0.total() >= x.1 .0.total() => Some(a),
            _ => Some(x),
        });
    if let Some((idx, (rates, faces))) = worst {
        if dt * rates.total() > 1.0 + 1e-12 {
            let f = (0..6)
                .max_by(|&a, &b| faces[a].total_cmp(&faces[b]))
                .unwrap_or(0);
            let side = if f % 2 == 0 { '-' } else { '+' };
            return Err(Error::Cfl {
                face: format!("{} face {}{}", cell_label(grid, idx), side, AXIS[f / 2]),
                dt,
                bound: 1.0 / rates.total(),
            });
        }
    }

    let h = grid.spacing();
    // total flux through every face in the + direction of its axis
    let mut fluxes: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for a in 0..grid.dim() {
        let s = grid.stride(a);
        let mut flux = vec![0.0; grid.n_faces(a)];
        let d = &coef.diffusivity;
        let chi = &coef.chi;
        par::fill(&mut flux, |f| {
            let fc = grid.face_coords(a, f);
            if grid.is_boundary_face(a, fc) {
                return 0.0;
            }
            let r = grid.idx(fc[0], fc[1], fc[2]);
            let l = r - s;
            let diff = -0.5 * (d[l] + d[r]) * (n[r] - n[l]) / h[a];
            let w = (c[r] - c[l]) / h[a];
            let drift = if w > 0.0 {
                w * n[l] * chi[l]
            } else {
                w * n[r] * chi[r]
            };
            let v = u[a][f];
            let adv = if v > 0.0 { v * n[l] } else { v * n[r] };
            diff + drift + adv
        });
        fluxes[a] = flux;
    }
    let mut n_new = vec![0.0; nc];
    par::fill(&mut n_new, |idx| {
        let cc = grid.coords(idx);
        let mut div = 0.0;
        for a in 0..grid.dim() {
            let lo = grid.face_idx(a, cc[0], cc[1], cc[2]);
            let hi = lo + grid.face_stride(a, a);
            div += (fluxes[a][hi] - fluxes[a][lo]) / h[a];
        }
        n[idx] - dt * div
    });
    Ok(n_new)
}

/// Diagnostics of one full step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    /// `dt` times the maximal advective, chemotactic-drift and diffusive rates.
    pub cfl_advective: f64,
    pub cfl_drift: f64,
    pub cfl_diffusive: f64,
    pub attempts: usize,
    pub viscous: [SolveStats; 3],
    pub pressure: SolveStats,
    pub concentration: SolveStats,
    pub divergence: f64,
    pub n_min: f64,
    pub n_max: f64,
    pub c_min: f64,
    pub c_max: f64,
}

/// How the step size is chosen from the requested maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtPolicy {
    /// `dt = min(dt_max, safety * stable dt)`.
    Adaptive,
    /// `dt = dt_max`; a stability violation is an error.
    Fixed,
}

const MAX_ATTEMPTS: usize = 8;

/// One Lie-split step `u -> c -> n` with `dt <= dt_max`.
pub fn step(
    grid: &Grid,
    params: &ModelParams,
    state: &FieldState,
    dt_max: f64,
    policy: DtPolicy,
    ws: &mut Workspace,
) -> Result<(FieldState, StepReport)> {
    if !(dt_max > 0.0) {
        return Err(Error::domain("dt_max", dt_max, "dt_max > 0"));
    }
    let safety = ws.settings.cfl_safety;
    let mut dt = dt_max;
    if policy == DtPolicy::Adaptive {
        let (_, n_rate) = n_rate_maxima(grid, params, state);
        let c_rate = 1.0 / c_stable_dt(grid, &state.u);
        dt = dt.min(safety / n_rate.max(c_rate));
    }
    for attempt in 1..=MAX_ATTEMPTS {
        let (u, p, proj) = step_u(grid, params, state, dt, ws)?;
        let mut next = FieldState {
            t: state.t,
            n: state.n.clone(),
            c: state.c.clone(),
            u,
            p,
        };
        if policy == DtPolicy::Adaptive {
            let bound = c_stable_dt(grid, &next.u);
            if dt > bound && attempt < MAX_ATTEMPTS {
                dt = safety * bound;
                continue;
            }
        }
        let (c_new, c_stats) = step_c(grid, params, &next, dt, ws)?;
        next.c = c_new;
        let (maxima, total) = n_rate_maxima(grid, params, &next);
        if policy == DtPolicy::Adaptive && dt * total > 1.0 && attempt < MAX_ATTEMPTS {
            dt = safety / total;
            continue;
        }
        next.n = step_n(grid, params, &next, dt)?;
        next.t = state.t + dt;
        let nc = grid.n_cells();
        let report = StepReport {
            dt,
            cfl_advective: dt * maxima.advective,
            cfl_drift: dt * maxima.drift,
            cfl_diffusive: dt * maxima.diffusive,
            attempts: attempt,
            viscous: proj.viscous,
            pressure: proj.pressure,
            concentration: c_stats,
            divergence: proj.divergence,
            n_min: par::min(nc, |i| next.n[i]),
            n_max: par::max(nc, |i| next.n[i]),
            c_min: par::min(nc, |i| next.c[i]),
            c_max: par::max(nc, |i| next.c[i]),
        };
        if !(report.n_min >= 0.0) {
            return Err(Error::Invariant("n >= 0", format!("min n = {:e}", report.n_min)));
        }
        return Ok((next, report));
    }
    unreachable!("the last attempt always completes or errors")
}
