//! Monitored functionals and the inequality checks built on them.
//!
//! Gradients are face differences `(x_R - x_L)/h`; a cell's `|grad x|^2` is the
//! mean of the squared differences on its two faces per axis, with zero on
//! walls. Summed over cells this is exactly the Dirichlet form of the Neumann
//! Laplacian used by the solver, so the discrete energy identities close.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::FaceOperator;
use crate::par;
use crate::regularization::RegularizationFamily;
use crate::solver::FieldState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub kappa: f64,
    pub sigma_c: f64,
    pub p_list: Vec<f64>,
    /// Mean of the initial density.
    pub n_bar0: f64,
    /// Exponent of the density decay gap.
    pub gap_p: f64,
}

impl DiagnosticsConfig {
    /// Defaults derived from the initial state: `kappa = max c0 / 2 + 1`,
    /// `sigma_c = 1e-12 max c0`, `p_list = {2, 4, m}` plus `extra_p`.
    pub fn from_initial(
        grid: &Grid,
        family: &RegularizationFamily,
        initial: &FieldState,
        extra_p: &[f64],
    ) -> Self {
        let c_max0 = par::max(initial.c.len(), |i| initial.c[i]).max(0.0);
        let mass = par::sum(initial.n.len(), |i| initial.n[i]) * grid.cell_volume();
        let mut p_list = vec![2.0, 4.0, family.m()];
        for &p in extra_p {
            if !p_list.contains(&p) {
                p_list.push(p);
            }
        }
        Self {
            kappa: 0.5 * c_max0 + 1.0,
            sigma_c: if c_max0 > 0.0 { 1e-12 * c_max0 } else { 1e-12 },
            p_list,
            n_bar0: mass / grid.domain_volume(),
            gap_p: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::domain("kappa", self.kappa, "kappa > 0"));
        }
        if !(self.sigma_c > 0.0) {
            return Err(Error::domain("sigma_c", self.sigma_c, "sigma_c > 0"));
        }
        Ok(())
    }
}

/// Time integrals advanced once per step with the post-step state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Running {
    /// `int_0^t sum F(n) c vol`.
    pub consumed_mass: f64,
    /// `int_0^t sum |grad c|^2 vol`.
    pub gradc_l2: f64,
    /// Running sup of `max n`.
    pub c1_sup: f64,
}

impl Running {
    pub fn start(state: &FieldState) -> Self {
        Self {
            c1_sup: par::max(state.n.len(), |i| state.n[i]),
            ..Self::default()
        }
    }

    pub fn advance(&mut self, grid: &Grid, family: &RegularizationFamily, state: &FieldState, dt: f64) {
        let vol = grid.cell_volume();
        let (n, c) = (&state.n, &state.c);
        self.consumed_mass += dt * par::sum(n.len(), |i| family.f(n[i]) * c[i]) * vol;
        self.gradc_l2 += dt * face_dirichlet_sum(grid, c) * vol;
        self.c1_sup = self.c1_sup.max(par::max(n.len(), |i| n[i]));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub c_max: f64,
    pub c_l2sq: f64,
    /// `sum c vol`.
    pub c_mass: f64,
    pub entropy: f64,
    pub grad_c_energy: f64,
    pub kinetic: f64,
    pub e_total: f64,
    pub dissipation_n: f64,
    pub dissipation_c: f64,
    pub dissipation_u: f64,
    /// `(p, ||n||_p)`.
    pub lp_norms: Vec<(f64, f64)>,
    pub y_quasi: f64,
    pub decay_gap_n: f64,
    pub decay_gap_c: f64,
    pub decay_gap_u: f64,
    pub consumed_mass_running: f64,
    pub gradc_l2_running: f64,
}

/// `sum over interior faces ((x_R - x_L)/h)^2`.
fn face_dirichlet_sum(grid: &Grid, x: &[f64]) -> f64 {
    let h = grid.spacing();
    par::sum(x.len(), |idx| {
        let c = grid.coords(idx);
        let mut acc = 0.0;
        for a in 0..grid.dim() {
            if c[a] + 1 < grid.cells()[a] {
                let d = (x[idx + grid.stride(a)] - x[idx]) / h[a];
                acc += d * d;
            }
        }
        acc
    })
}

/// Cell value of `|grad x|^2`.
pub fn cell_grad_sq(grid: &Grid, x: &[f64], out: &mut [f64]) {
    let h = grid.spacing();
    par::fill(out, |idx| {
        let c = grid.coords(idx);
        let mut acc = 0.0;
        for a in 0..grid.dim() {
            let s = grid.stride(a);
            if c[a] > 0 {
                let d = (x[idx] - x[idx - s]) / h[a];
                acc += 0.5 * d * d;
            }
            if c[a] + 1 < grid.cells()[a] {
                let d = (x[idx + s] - x[idx]) / h[a];
                acc += 0.5 * d * d;
            }
        }
        acc
    });
}

fn check_finite(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(name))
    }
}

pub fn evaluate(
    grid: &Grid,
    family: &RegularizationFamily,
    state: &FieldState,
    cfg: &DiagnosticsConfig,
    running: &Running,
) -> Result<DiagnosticsRecord> {
    let vol = grid.cell_volume();
    let nc = grid.n_cells();
    let (n, c, u) = (&state.n, &state.c, &state.u);
    let m = family.m();
    let sigma = cfg.sigma_c;

    let mass = par::sum(nc, |i| n[i]) * vol;
    let c_max = par::max(nc, |i| c[i]);
    let c_l2sq = par::sum(nc, |i| c[i] * c[i]) * vol;
    let entropy = par::sum(nc, |i| if n[i] > 0.0 { n[i] * n[i].ln() } else { 0.0 }) * vol;

    let mut grad_c = vec![0.0; nc];
    cell_grad_sq(grid, c, &mut grad_c);
    let grad_c_energy = 0.5 * par::sum(nc, |i| grad_c[i] / (c[i] + sigma)) * vol;
    let dissipation_c = par::sum(nc, |i| {
        let d = c[i] + sigma;
        grad_c[i] * grad_c[i] / (d * d * d)
    }) * vol;
    let grad_c_l2 = face_dirichlet_sum(grid, c) * vol;
    let grad_c_max = par::max(nc, |i| grad_c[i]).max(0.0).sqrt();

    let u_sq: f64 = (0..grid.dim())
        .map(|a| par::sum(u[a].len(), |f| u[a][f] * u[a][f]))
        .sum();
    let kinetic = cfg.kappa * u_sq * vol;
    let dissipation_u: f64 = (0..grid.dim())
        .map(|a| {
            FaceOperator {
                grid,
                axis: a,
                dt: 1.0,
            }
            .dirichlet_energy(&u[a])
        })
        .sum();
    let u_max = par::max(nc, |idx| {
        let cc = grid.coords(idx);
        let mut s = 0.0;
        for a in 0..grid.dim() {
            let lo = grid.face_idx(a, cc[0], cc[1], cc[2]);
            let hi = lo + grid.face_stride(a, a);
            let v = 0.5 * (u[a][lo] + u[a][hi]);
            s += v * v;
        }
        s
    })
    .max(0.0)
    .sqrt();

    let half_m = 0.5 * m;
    let n_pow: Vec<f64> = n.iter().map(|&v| v.max(0.0).powf(half_m)).collect();
    let dissipation_n = (2.0 / m).powi(2) * face_dirichlet_sum(grid, &n_pow) * vol;

    let lp_norms = cfg
        .p_list
        .iter()
        .map(|&p| (p, (par::sum(nc, |i| n[i].abs().powf(p)) * vol).powf(1.0 / p)))
        .collect();
    let n_dev_sq = par::sum(nc, |i| (n[i] - cfg.n_bar0).powi(2)) * vol;
    let c1 = running.c1_sup;
    let y_quasi = n_dev_sq + c1 * c1 * grad_c_l2;
    let gp = cfg.gap_p;
    let decay_gap_n = (par::sum(nc, |i| (n[i] - cfg.n_bar0).abs().powf(gp)) * vol).powf(1.0 / gp);

    let rec = DiagnosticsRecord {
        t: state.t,
        mass: check_finite("mass", mass)?,
        c_max: check_finite("c_max", c_max)?,
        c_l2sq: check_finite("c_l2sq", c_l2sq)?,
        c_mass: check_finite("c_mass", par::sum(nc, |i| c[i]) * vol)?,
        entropy: check_finite("entropy", entropy)?,
        grad_c_energy: check_finite("grad_c_energy", grad_c_energy)?,
        kinetic: check_finite("kinetic", kinetic)?,
        e_total: check_finite("E_total", entropy + grad_c_energy + kinetic)?,
        dissipation_n: check_finite("dissipation_n", dissipation_n)?,
        dissipation_c: check_finite("dissipation_c", dissipation_c)?,
        dissipation_u: check_finite("dissipation_u", dissipation_u)?,
        lp_norms,
        y_quasi: check_finite("y_quasi", y_quasi)?,
        decay_gap_n: check_finite("decay_gap_n", decay_gap_n)?,
        decay_gap_c: check_finite("decay_gap_c", c_max + grad_c_max)?,
        decay_gap_u: check_finite("decay_gap_u", u_max)?,
        consumed_mass_running: running.consumed_mass,
        gradc_l2_running: running.gradc_l2,
    };
    if rec.lp_norms.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite("lp_norms"));
    }
    Ok(rec)
}

const FIXED_COLUMNS_HEAD: [&str; 12] = [
    "t",
    "mass",
    "c_max",
    "c_l2sq",
    "c_mass",
    "entropy",
    "grad_c_energy",
    "kinetic",
    "E_total",
    "dissipation_n",
    "dissipation_c",
    "dissipation_u",
];
const FIXED_COLUMNS_TAIL: [&str; 6] = [
    "y_quasi",
    "decay_gap_n",
    "decay_gap_c",
    "decay_gap_u",
    "consumed_mass_running",
    "gradc_l2_running",
];

/// Header line of `diagnostics.csv`; one `lp_norm_<p>` column per monitored exponent.
pub fn csv_header(p_list: &[f64]) -> String {
    let mut cols: Vec<String> = FIXED_COLUMNS_HEAD.iter().map(|s| s.to_string()).collect();
    cols.extend(p_list.iter().map(|p| format!("lp_norm_{p}")));
    cols.extend(FIXED_COLUMNS_TAIL.iter().map(|s| s.to_string()));
    cols.join(",")
}

impl DiagnosticsRecord {
    /// Shortest round-trip formatting, so CSV rows are bit-exact.
    pub fn csv_row(&self) -> String {
        let mut vals = vec![
            self.t,
            self.mass,
            self.c_max,
            self.c_l2sq,
            self.c_mass,
            self.entropy,
            self.grad_c_energy,
            self.kinetic,
            self.e_total,
            self.dissipation_n,
            self.dissipation_c,
            self.dissipation_u,
        ];
        vals.extend(self.lp_norms.iter().map(|(_, v)| *v));
        vals.extend([
            self.y_quasi,
            self.decay_gap_n,
            self.decay_gap_c,
            self.decay_gap_u,
            self.consumed_mass_running,
            self.gradc_l2_running,
        ]);
        vals.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",")
    }
}

/// Parses a `diagnostics.csv` produced by [`csv_header`] / [`DiagnosticsRecord::csv_row`].
pub fn parse_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Config("empty diagnostics file".into()))?
        .split(',')
        .collect();
    let n_lp = header.len().checked_sub(FIXED_COLUMNS_HEAD.len() + FIXED_COLUMNS_TAIL.len());
    let n_lp = n_lp.ok_or_else(|| Error::Config("diagnostics header too short".into()))?;
    let ps: Vec<f64> = header[FIXED_COLUMNS_HEAD.len()..FIXED_COLUMNS_HEAD.len() + n_lp]
        .iter()
        .map(|h| {
            h.strip_prefix("lp_norm_")
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::Config(format!("bad column `{h}`")))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (row, line) in lines.enumerate() {
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("row {}: {e}", row + 2)))?;
        if v.len() != header.len() {
            return Err(Error::Config(format!("row {} has {} columns", row + 2, v.len())));
        }
        let k = FIXED_COLUMNS_HEAD.len();
        let tail = &v[k + n_lp..];
        out.push(DiagnosticsRecord {
            t: v[0],
            mass: v[1],
            c_max: v[2],
            c_l2sq: v[3],
            c_mass: v[4],
            entropy: v[5],
            grad_c_energy: v[6],
            kinetic: v[7],
            e_total: v[8],
            dissipation_n: v[9],
            dissipation_c: v[10],
            dissipation_u: v[11],
            lp_norms: ps.iter().copied().zip(v[k..k + n_lp].iter().copied()).collect(),
            y_quasi: tail[0],
            decay_gap_n: tail[1],
            decay_gap_c: tail[2],
            decay_gap_u: tail[3],
            consumed_mass_running: tail[4],
            gradc_l2_running: tail[5],
        });
    }
    Ok(out)
}

/// One line of `checks.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub max_deviation: f64,
    pub at_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckReport {
    pub fn new(name: &str, pass: bool, max_deviation: f64, at_time: f64) -> Self {
        Self {
            name: name.to_string(),
            pass,
            max_deviation,
            at_time,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: String) -> Self {
        self.detail = Some(detail);
        self
    }
}

fn worst<I: Iterator<Item = (f64, f64)>>(it: I) -> (f64, f64) {
    it.fold((0.0, 0.0), |acc, (t, d)| if d > acc.1 || d.is_nan() { (t, d) } else { acc })
}

/// `|sum c(t) vol + consumed(t) - sum c0 vol| <= tol` at every sample.
pub fn check_c_mass_identity(records: &[DiagnosticsRecord], c_mass0: f64, tol: f64) -> CheckReport {
    let (at, dev) = worst(
        records
            .iter()
            .map(|r| (r.t, (r.c_mass + r.consumed_mass_running - c_mass0).abs())),
    );
    CheckReport::new("c_mass_identity", dev <= tol, dev, at)
}

/// `c_l2sq/2 + int |grad c|^2 <= c_l2sq(0)/2 * (1 + rel)` at every sample.
pub fn check_c_l2_inequality(records: &[DiagnosticsRecord], c_l2sq0: f64, rel: f64) -> CheckReport {
    let bound = 0.5 * c_l2sq0 * (1.0 + rel);
    let (at, excess) = worst(
        records
            .iter()
            .map(|r| (r.t, 0.5 * r.c_l2sq + r.gradc_l2_running - 0.5 * c_l2sq0)),
    );
    let pass = records
        .iter()
        .all(|r| 0.5 * r.c_l2sq + r.gradc_l2_running <= bound);
    CheckReport::new("c_l2_inequality", pass, excess, at)
}

/// Empirical constants `C_emp` of the short-time smallness estimate, one per window.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiEnergyReport {
    pub report: CheckReport,
    pub c_emp: Vec<f64>,
}

/// For every window `[t*, t* + window]` starting at a sample, the smallest
/// `C_emp` with `y(t) <= C_emp (y(t*) + sup_window ||c||_2^2)`. Passes when all
/// constants are finite and at most `cap`.
pub fn check_quasi_energy_short_time(
    records: &[DiagnosticsRecord],
    window: f64,
    cap: f64,
) -> QuasiEnergyReport {
    let mut c_emp = Vec::new();
    let mut worst_at = 0.0;
    let mut worst_val = 0.0;
    let t_end = records.last().map_or(0.0, |r| r.t);
    let mut k = 0usize;
    loop {
        let t_star = records.first().map_or(0.0, |r| r.t) + k as f64 * window;
        if t_star + window > t_end + 1e-9 {
            break;
        }
        let inside: Vec<&DiagnosticsRecord> = records
            .iter()
            .filter(|r| r.t >= t_star - 1e-12 && r.t <= t_star + window + 1e-12)
            .collect();
        if inside.is_empty() {
            break;
        }
        let start = inside[0];
        let c_sup = inside.iter().map(|r| r.c_l2sq).fold(0.0, f64::max);
        let denom = start.y_quasi + c_sup;
        let numer = inside.iter().map(|r| r.y_quasi).fold(0.0, f64::max);
        let ce = if denom > 0.0 {
            numer / denom
        } else if numer == 0.0 {
            1.0
        } else {
            f64::INFINITY
        };
        if ce > worst_val || ce.is_nan() {
            worst_val = ce;
            worst_at = t_star;
        }
        c_emp.push(ce);
        k += 1;
    }
    let pass = c_emp.len() >= 2 && c_emp.iter().all(|c| c.is_finite() && *c <= cap);
    let report = CheckReport::new("quasi_energy_short_time", pass, worst_val, worst_at)
        .with_detail(format!("{} windows", c_emp.len()));
    QuasiEnergyReport { report, c_emp }
}

/// Endpoint decay of the three gaps relative to their maxima over the run.
pub fn check_decay(records: &[DiagnosticsRecord], thresholds: [f64; 3]) -> Vec<CheckReport> {
    let Some(last) = records.last() else {
        return Vec::new();
    };
    type Gap = (&'static str, fn(&DiagnosticsRecord) -> f64);
    let gaps: [Gap; 3] = [
        ("decay_n", |r| r.decay_gap_n),
        ("decay_c", |r| r.decay_gap_c),
        ("decay_u", |r| r.decay_gap_u),
    ];
    gaps.iter()
        .zip(thresholds)
        .map(|((name, get), thr)| {
            let max = records.iter().map(get).fold(0.0, f64::max);
            let end = get(last);
            let ratio = if max > 0.0 { end / max } else { 0.0 };
            CheckReport::new(name, end <= thr * max, ratio, last.t)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub report: CheckReport,
    pub sup_energy: f64,
    pub window_dissipation: Vec<f64>,
}

/// Trapezoidal integral of `dissipation_n + dissipation_c + dissipation_u`
/// over consecutive full windows of length `window`.
pub fn window_dissipation(records: &[DiagnosticsRecord], window: f64) -> Vec<f64> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let t0 = first.t;
    let t_end = records.last().unwrap().t;
    let n_windows = ((t_end - t0) / window + 1e-9).floor() as usize;
    let mut out = vec![0.0; n_windows];
    let total = |r: &DiagnosticsRecord| r.dissipation_n + r.dissipation_c + r.dissipation_u;
    for pair in records.windows(2) {
        let mid = 0.5 * (pair[0].t + pair[1].t);
        let k = ((mid - t0) / window).floor() as usize;
        if k < n_windows {
            out[k] += 0.5 * (pair[1].t - pair[0].t) * (total(&pair[0]) + total(&pair[1]));
        }
    }
    out
}

/// `sup E < inf` and window dissipation non-increasing after `transient` windows.
pub fn check_energy_boundedness(records: &[DiagnosticsRecord], window: f64, transient: usize) -> EnergyReport {
    let sup_energy = records.iter().map(|r| r.e_total).fold(f64::NEG_INFINITY, f64::max);
    let w = window_dissipation(records, window);
    let mut pass = sup_energy.is_finite();
    let mut max_increase = 0.0;
    let mut at = 0.0;
    for k in transient..w.len().saturating_sub(1) {
        let inc = w[k + 1] - w[k];
        if inc > 1e-12 * w[k].abs().max(f64::MIN_POSITIVE) {
            pass = false;
        }
        if inc > max_increase {
            max_increase = inc;
            at = records[0].t + (k + 1) as f64 * window;
        }
    }
    EnergyReport {
        report: CheckReport::new("energy_boundedness", pass, max_increase, at)
            .with_detail(format!("sup E = {sup_energy:e}")),
        sup_energy,
        window_dissipation: w,
    }
}

/// `entropy >= -|Omega|/e` at every sample.
pub fn check_entropy_floor(records: &[DiagnosticsRecord], domain_volume: f64) -> CheckReport {
    let floor = -domain_volume / std::f64::consts::E;
    let (at, dev) = worst(records.iter().map(|r| (r.t, floor - r.entropy)));
    let pass = records.iter().all(|r| r.entropy >= floor * (1.0 + 1e-14));
    CheckReport::new("entropy_floor", pass, dev.max(0.0), at)
}
