use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::initial::init_state;
use super::snapshot::{
    read_field, read_manifest, write_field, FileEntry, Manifest, SnapshotEntry, SnapshotHeader,
};
use super::{max_abs_divergence, step, DtPolicy, FieldState, ModelParams, StepReport, Workspace};
use crate::diagnostics::{
    self, check_c_l2_inequality, check_c_mass_identity, check_decay, check_energy_boundedness,
    check_entropy_floor, check_quasi_energy_short_time, csv_header, CheckReport, DiagnosticsConfig,
    DiagnosticsRecord, Running,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::par;

/// Quantities of the initial state that the checks compare against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub diagnostics: DiagnosticsConfig,
    pub mass0: f64,
    pub c_max0: f64,
    pub c_mass0: f64,
    pub c_l2sq0: f64,
}

/// Per-sample solver statistics; step-level extrema cover the steps since the
/// previous sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub sample: usize,
    pub t: f64,
    pub steps: u64,
    pub n_min: f64,
    pub c_min: f64,
    pub c_max: f64,
    /// Largest `max|div u|` after any projection in the interval.
    pub divergence: f64,
    pub step_n_min: f64,
    pub step_c_min: f64,
    pub step_c_max: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub samples: Vec<SampleInfo>,
    pub checks: Vec<CheckReport>,
    pub final_state: FieldState,
    pub reference: Reference,
}

impl RunOutput {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

const FIELDS: [&str; 6] = ["n", "c", "u_x", "u_y", "u_z", "p"];

/// A run in progress: state, running integrals and sample bookkeeping.
pub struct Simulation {
    pub config: SimConfig,
    pub grid: Grid,
    pub params: ModelParams,
    pub state: FieldState,
    pub running: Running,
    pub reference: Reference,
    pub steps: u64,
    /// Index of the sample the state sits at.
    pub sample: usize,
    pub last_report: Option<StepReport>,
    policy: DtPolicy,
    ws: Workspace,
    interval: SampleInfo,
}

impl Simulation {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let params = config.model_params()?;
        let state = init_state(&params, &grid, &config.ic, config.seed)?;
        let mut diag = DiagnosticsConfig::from_initial(&grid, &params.family, &state, &config.diagnostics.p_list);
        if let Some(k) = config.diagnostics.kappa {
            diag.kappa = k;
        }
        if let Some(s) = config.diagnostics.sigma_c {
            diag.sigma_c = s;
        }
        diag.validate()?;
        let nc = grid.n_cells();
        let vol = grid.cell_volume();
        let reference = Reference {
            diagnostics: diag,
            mass0: par::sum(nc, |i| state.n[i]) * vol,
            c_max0: par::max(nc, |i| state.c[i]),
            c_mass0: par::sum(nc, |i| state.c[i]) * vol,
            c_l2sq0: par::sum(nc, |i| state.c[i] * state.c[i]) * vol,
        };
        let running = Running::start(&state);
        Ok(Self::assemble(config, grid, params, state, running, reference, 0, 0))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: &SimConfig,
        grid: Grid,
        params: ModelParams,
        state: FieldState,
        running: Running,
        reference: Reference,
        steps: u64,
        sample: usize,
    ) -> Self {
        let ws = Workspace::new(&grid);
        let policy = if config.time.force_dt {
            DtPolicy::Fixed
        } else {
            DtPolicy::Adaptive
        };
        let mut sim = Self {
            config: config.clone(),
            grid,
            params,
            state,
            running,
            reference,
            steps,
            sample,
            last_report: None,
            policy,
            ws,
            interval: SampleInfo {
                sample,
                t: 0.0,
                steps,
                n_min: 0.0,
                c_min: 0.0,
                c_max: 0.0,
                divergence: 0.0,
                step_n_min: 0.0,
                step_c_min: 0.0,
                step_c_max: 0.0,
                dt_min: 0.0,
                dt_max: 0.0,
            },
        };
        sim.reset_interval();
        sim
    }

    /// Restores a run from a manifest entry written by [`run`].
    pub fn from_snapshot(config: &SimConfig, reference: &Reference, entry: &SnapshotEntry, dir: &Path) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let params = config.model_params()?;
        let mut state = FieldState::zeros(&grid);
        for name in FIELDS {
            if name == "u_z" && grid.dim() < 3 {
                continue;
            }
            let file = entry.file(name)?;
            let (header, data) = read_field(&dir.join(&file.path), Some(&file.sha256))?;
            let target = match name {
                "n" => &mut state.n,
                "c" => &mut state.c,
                "u_x" => &mut state.u[0],
                "u_y" => &mut state.u[1],
                "u_z" => &mut state.u[2],
                _ => &mut state.p,
            };
            if data.len() != target.len() || header.dim as usize != grid.dim() {
                return Err(Error::Snapshot(format!("field `{name}` does not match the grid")));
            }
            *target = data;
            state.t = header.time;
        }
        if state.t != entry.t {
            return Err(Error::Snapshot("snapshot time disagrees with the manifest".into()));
        }
        Ok(Self::assemble(
            config,
            grid,
            params,
            state,
            entry.running,
            reference.clone(),
            entry.steps,
            entry.sample,
        ))
    }

    /// Index of the final sample.
    pub fn last_sample(&self) -> usize {
        let t = &self.config.time;
        if t.t_final == 0.0 {
            0
        } else {
            (t.t_final / t.sample_every - 1e-9).ceil().max(1.0) as usize
        }
    }

    /// Sample times are `k * sample_every` and do not depend on `t_final`,
    /// so a shorter run visits exactly the times of a longer one. Only a
    /// final sample that is not a multiple of the interval sits at `t_final`.
    pub fn sample_time(&self, k: usize) -> f64 {
        let t = &self.config.time;
        let on_grid = k as f64 * t.sample_every;
        if k >= self.last_sample() && (on_grid - t.t_final).abs() > 1e-9 * t.sample_every {
            t.t_final
        } else {
            on_grid
        }
    }

    pub fn record(&self) -> Result<DiagnosticsRecord> {
        diagnostics::evaluate(
            &self.grid,
            &self.params.family,
            &self.state,
            &self.reference.diagnostics,
            &self.running,
        )
    }

    fn reset_interval(&mut self) {
        let div = max_abs_divergence(&self.grid, &self.state.u);
        let nc = self.grid.n_cells();
        let (n, c) = (&self.state.n, &self.state.c);
        let n_min = par::min(nc, |i| n[i]);
        let c_min = par::min(nc, |i| c[i]);
        let c_max = par::max(nc, |i| c[i]);
        self.interval = SampleInfo {
            sample: self.sample,
            t: self.state.t,
            steps: self.steps,
            n_min,
            c_min,
            c_max,
            divergence: div,
            step_n_min: n_min,
            step_c_min: c_min,
            step_c_max: c_max,
            dt_min: f64::INFINITY,
            dt_max: 0.0,
        };
    }

    /// Statistics of the current sample.
    pub fn sample_info(&self) -> SampleInfo {
        let mut info = self.interval;
        if info.dt_min == f64::INFINITY {
            info.dt_min = 0.0;
        }
        info
    }

    /// One step, never overshooting `t_target`.
    pub fn step_toward(&mut self, t_target: f64) -> Result<StepReport> {
        let remaining = t_target - self.state.t;
        // equal steps that land on the target; the division can exceed dt_max by
        // an ulp-sized amount but never leaves a sliver step behind
        let parts = (remaining / self.config.time.dt_max - 1e-9).ceil().max(1.0);
        let cap = remaining / parts;
        let (mut next, report) = step(&self.grid, &self.params, &self.state, cap, self.policy, &mut self.ws)?;
        if (report.dt == cap && parts == 1.0) || next.t >= t_target {
            next.t = t_target;
        }
        self.state = next;
        self.steps += 1;
        self.running
            .advance(&self.grid, &self.params.family, &self.state, report.dt);
        let iv = &mut self.interval;
        iv.divergence = iv.divergence.max(report.divergence);
        iv.step_n_min = iv.step_n_min.min(report.n_min);
        iv.step_c_min = iv.step_c_min.min(report.c_min);
        iv.step_c_max = iv.step_c_max.max(report.c_max);
        iv.dt_min = iv.dt_min.min(report.dt);
        iv.dt_max = iv.dt_max.max(report.dt);
        self.last_report = Some(report.clone());
        Ok(report)
    }

    /// Marches to the next sample time. The step extrema of the interval are
    /// kept in [`Simulation::sample_info`] until the following call.
    pub fn advance_sample(&mut self) -> Result<()> {
        let target = self.sample_time(self.sample + 1);
        self.interval.dt_min = f64::INFINITY;
        self.interval.dt_max = 0.0;
        self.interval.divergence = 0.0;
        self.interval.step_n_min = f64::INFINITY;
        self.interval.step_c_min = f64::INFINITY;
        self.interval.step_c_max = f64::NEG_INFINITY;
        while self.state.t < target {
            self.step_toward(target)?;
        }
        self.sample += 1;
        let nc = self.grid.n_cells();
        let (n, c) = (&self.state.n, &self.state.c);
        let iv = &mut self.interval;
        iv.sample = self.sample;
        iv.t = self.state.t;
        iv.steps = self.steps;
        iv.n_min = par::min(nc, |i| n[i]);
        iv.c_min = par::min(nc, |i| c[i]);
        iv.c_max = par::max(nc, |i| c[i]);
        Ok(())
    }

    fn write_snapshot(&self, dir: &Path) -> Result<SnapshotEntry> {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir)?;
        let g = &self.grid;
        let cells = g.cells().map(|c| c as u32);
        let mut files = Vec::new();
        for name in FIELDS {
            let (counts, data): ([u32; 3], &[f64]) = match name {
                "n" => (cells, &self.state.n),
                "c" => (cells, &self.state.c),
                "p" => (cells, &self.state.p),
                _ => {
                    let a = match name {
                        "u_x" => 0,
                        "u_y" => 1,
                        _ => 2,
                    };
                    if a >= g.dim() {
                        continue;
                    }
                    (g.face_dims(a).map(|c| c as u32), &self.state.u[a])
                }
            };
            let header = SnapshotHeader {
                dim: g.dim() as u32,
                counts,
                time: self.state.t,
            };
            let rel = PathBuf::from("snapshots").join(format!("{name}_{:06}.bin", self.sample));
            let sha256 = write_field(&dir.join(&rel), &header, data)?;
            files.push((name.to_string(), FileEntry { path: rel, sha256 }));
        }
        Ok(SnapshotEntry {
            sample: self.sample,
            t: self.state.t,
            steps: self.steps,
            running: self.running,
            files,
        })
    }
}

/// Absolute slack of the sampled max principle.
const MAX_PRINCIPLE_TOL: f64 = 1e-12;
/// Relative drift allowed on the total density.
const MASS_TOL: f64 = 1e-12;

fn solver_checks(reference: &Reference, records: &[DiagnosticsRecord], samples: &[SampleInfo]) -> Vec<CheckReport> {
    let mut out = Vec::new();
    let (mut dev, mut at) = (0.0, 0.0);
    for r in records {
        let d = ((r.mass - reference.mass0) / reference.mass0).abs();
        if d > dev || d.is_nan() {
            (dev, at) = (d, r.t);
        }
    }
    out.push(CheckReport::new("mass_conservation", dev <= MASS_TOL, dev, at));

    let (mut dev, mut at) = (f64::NEG_INFINITY, 0.0);
    let mut prev = reference.c_max0;
    for s in samples {
        let d = (s.c_max - prev).max(s.step_c_max - reference.c_max0);
        if d > dev || d.is_nan() {
            (dev, at) = (d, s.t);
        }
        prev = s.c_max;
    }
    out.push(CheckReport::new("max_principle", dev <= MAX_PRINCIPLE_TOL, dev.max(0.0), at));

    let (mut low, mut at) = (f64::INFINITY, 0.0);
    for s in samples {
        let l = s.n_min.min(s.c_min).min(s.step_n_min).min(s.step_c_min);
        if l < low || l.is_nan() {
            (low, at) = (l, s.t);
        }
    }
    out.push(CheckReport::new("positivity", low >= 0.0, (-low).max(0.0), at));

    let (mut dev, mut at) = (0.0, 0.0);
    for s in samples {
        if s.divergence > dev || s.divergence.is_nan() {
            (dev, at) = (s.divergence, s.t);
        }
    }
    out.push(CheckReport::new("solenoidality", dev <= 1e-10, dev, at));
    out
}

/// Every check of a finished run.
pub fn evaluate_checks(
    config: &SimConfig,
    grid: &Grid,
    reference: &Reference,
    records: &[DiagnosticsRecord],
    samples: &[SampleInfo],
) -> Vec<CheckReport> {
    let o = &config.checks;
    let mut out = solver_checks(reference, records, samples);
    out.push(check_c_mass_identity(records, reference.c_mass0, o.c_mass_tol));
    out.push(check_c_l2_inequality(records, reference.c_l2sq0, o.c_l2_rel));
    out.push(check_entropy_floor(records, grid.domain_volume()));
    out.push(check_quasi_energy_short_time(records, o.window, o.quasi_energy_cap).report);
    out.push(check_energy_boundedness(records, o.window, o.transient_windows).report);
    out.extend(check_decay(records, o.decay_thresholds));
    out
}

/// Runs `config` without touching the filesystem.
pub fn run_in_memory(config: &SimConfig) -> Result<RunOutput> {
    let mut sim = Simulation::new(config)?;
    let mut records = vec![sim.record()?];
    let mut samples = vec![sim.sample_info()];
    while sim.sample < sim.last_sample() {
        sim.advance_sample()?;
        records.push(sim.record()?);
        samples.push(sim.sample_info());
    }
    let checks = evaluate_checks(config, &sim.grid, &sim.reference, &records, &samples);
    Ok(RunOutput {
        records,
        samples,
        checks,
        final_state: sim.state,
        reference: sim.reference,
    })
}

fn compatible(a: &SimConfig, b: &SimConfig) -> bool {
    a.dim == b.dim
        && a.grid == b.grid
        && a.model == b.model
        && a.phi == b.phi
        && a.ic == b.ic
        && a.seed == b.seed
        && a.diagnostics == b.diagnostics
        && a.time.dt_max == b.time.dt_max
        && a.time.sample_every == b.time.sample_every
        && a.time.force_dt == b.time.force_dt
}

struct Outputs {
    dir: PathBuf,
    records: Vec<DiagnosticsRecord>,
    samples: Vec<SampleInfo>,
    snapshots: Vec<SnapshotEntry>,
}

impl Outputs {
    fn write_diagnostics(&self, p_list: &[f64]) -> Result<FileEntry> {
        let mut text = csv_header(p_list);
        text.push('\n');
        for r in &self.records {
            text.push_str(&r.csv_row());
            text.push('\n');
        }
        let rel = Path::new("diagnostics.csv");
        fs::write(self.dir.join(rel), text)?;
        FileEntry::of(&self.dir, rel)
    }

    fn write_manifest(
        &self,
        config: &SimConfig,
        reference: &Reference,
        diagnostics: Option<FileEntry>,
        checks: Option<FileEntry>,
        error: Option<String>,
    ) -> Result<()> {
        let manifest = Manifest {
            status: if error.is_some() { "failed" } else { "complete" }.into(),
            error,
            config: config.clone(),
            reference: reference.clone(),
            samples: self.samples.clone(),
            snapshots: self.snapshots.clone(),
            diagnostics,
            checks,
        };
        fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

fn march(sim: &mut Simulation, out: &mut Outputs) -> Result<()> {
    let every = sim.config.output.snapshot_every;
    while sim.sample < sim.last_sample() {
        sim.advance_sample()?;
        out.records.push(sim.record()?);
        out.samples.push(sim.sample_info());
        if sim.sample.is_multiple_of(every) || sim.sample == sim.last_sample() {
            out.snapshots.push(sim.write_snapshot(&out.dir)?);
        }
    }
    Ok(())
}

/// Runs `config`, writing `diagnostics.csv`, `checks.json`, `snapshots/` and
/// `manifest.json` into `out_dir`. With `resume`, continues from the last
/// snapshot of that manifest; the earlier samples are carried over so the
/// outputs match an uninterrupted run bit for bit.
///
/// On failure a manifest with status `failed` and the partial diagnostics are
/// still written before the error is returned.
pub fn run(config: &SimConfig, out_dir: &Path, resume: Option<&Path>) -> Result<RunOutput> {
    fs::create_dir_all(out_dir)?;
    let (mut sim, mut out) = match resume {
        None => {
            let sim = Simulation::new(config)?;
            let mut out = Outputs {
                dir: out_dir.to_path_buf(),
                records: vec![sim.record()?],
                samples: vec![sim.sample_info()],
                snapshots: Vec::new(),
            };
            out.snapshots.push(sim.write_snapshot(out_dir)?);
            (sim, out)
        }
        Some(path) => resume_from(config, out_dir, path)?,
    };
    let p_list = sim.reference.diagnostics.p_list.clone();
    if let Err(e) = march(&mut sim, &mut out) {
        let diag = out.write_diagnostics(&p_list).ok();
        out.write_manifest(config, &sim.reference, diag, None, Some(e.to_string()))?;
        return Err(e);
    }
    let diag = out.write_diagnostics(&p_list)?;
    let checks = evaluate_checks(config, &sim.grid, &sim.reference, &out.records, &out.samples);
    fs::write(out_dir.join("checks.json"), serde_json::to_string_pretty(&checks)?)?;
    let checks_entry = FileEntry::of(out_dir, Path::new("checks.json"))?;
    out.write_manifest(config, &sim.reference, Some(diag), Some(checks_entry), None)?;
    Ok(RunOutput {
        records: out.records,
        samples: out.samples,
        checks,
        final_state: sim.state,
        reference: sim.reference,
    })
}

fn resume_from(config: &SimConfig, out_dir: &Path, manifest_path: &Path) -> Result<(Simulation, Outputs)> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    if !compatible(config, &manifest.config) {
        return Err(Error::Config(
            "resume config differs from the manifest in more than t_final/output/checks".into(),
        ));
    }
    let entry = manifest
        .snapshots
        .last()
        .ok_or_else(|| Error::Snapshot("manifest lists no snapshots".into()))?;
    let sim = Simulation::from_snapshot(config, &manifest.reference, entry, base)?;
    if sim.sample > sim.last_sample() || entry.t > config.time.t_final {
        return Err(Error::Config("t_final precedes the resumed snapshot".into()));
    }
    let diag = manifest
        .diagnostics
        .as_ref()
        .ok_or_else(|| Error::Snapshot("manifest lists no diagnostics".into()))?;
    let mut records = diagnostics::parse_csv(&fs::read_to_string(base.join(&diag.path))?)?;
    if records.len() <= entry.sample || manifest.samples.len() <= entry.sample {
        return Err(Error::Snapshot("diagnostics end before the resumed snapshot".into()));
    }
    records.truncate(entry.sample + 1);
    let samples = manifest.samples[..=entry.sample].to_vec();
    let same_dir = fs::canonicalize(base)? == fs::canonicalize(out_dir)?;
    let mut snapshots = Vec::new();
    for s in manifest.snapshots.iter().filter(|s| s.sample <= entry.sample) {
        if !same_dir {
            fs::create_dir_all(out_dir.join("snapshots"))?;
            for (_, f) in &s.files {
                fs::copy(base.join(&f.path), out_dir.join(&f.path))?;
            }
        }
        snapshots.push(s.clone());
    }
    let out = Outputs {
        dir: out_dir.to_path_buf(),
        records,
        samples,
        snapshots,
    };
    Ok((sim, out))
}
