//! Process-level parameter sweeps: one child `simulate` per value.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use chemostokes::diagnostics::parse_csv;
use chemostokes::solver::{read_field, read_manifest, SimConfig};
use chemostokes::CheckReport;

use crate::exponents::certificate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    M,
    Eps,
    /// Cells per axis.
    Grid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    /// Relative paths are resolved against the sweep file's directory.
    pub base_config: PathBuf,
    #[serde(default = "one")]
    pub parallel_runs: usize,
}

fn one() -> usize {
    1
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            bail!("sweep values must not be empty");
        }
        let up = self.values.windows(2).all(|w| w[0] < w[1]);
        let down = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            bail!("sweep values must be strictly monotone");
        }
        if self.parallel_runs == 0 {
            bail!("parallel_runs must be >= 1");
        }
        if self.axis == Axis::Grid && self.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            bail!("grid sweep values must be positive integers (cells per axis)");
        }
        Ok(())
    }

    fn apply(&self, base: &SimConfig, value: f64) -> SimConfig {
        let mut cfg = base.clone();
        match self.axis {
            Axis::M => cfg.model.m = value,
            Axis::Eps => cfg.model.eps = value,
            Axis::Grid => cfg.grid.cells = vec![value as usize; cfg.dim],
        }
        cfg
    }

    fn label(&self) -> &'static str {
        match self.axis {
            Axis::M => "m",
            Axis::Eps => "eps",
            Axis::Grid => "grid",
        }
    }
}

struct Child {
    value: f64,
    dir: PathBuf,
    exit: Option<i32>,
}

pub fn cmd_sweep(
    spec_path: &Path,
    output_dir: Option<PathBuf>,
    threads: Option<usize>,
    seed: Option<u64>,
) -> Result<ExitCode> {
    let text = fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let spec: SweepSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", spec_path.display()))?;
    spec.validate()?;
    let base_path = match spec.base_config.is_absolute() {
        true => spec.base_config.clone(),
        false => spec_path.parent().unwrap_or(Path::new(".")).join(&spec.base_config),
    };
    let base = SimConfig::load(&base_path).with_context(|| format!("reading {}", base_path.display()))?;
    let root = output_dir.unwrap_or_else(|| PathBuf::from("sweep"));
    fs::create_dir_all(&root)?;

    // write every child config up front so bad values fail before any run starts
    let mut children = Vec::new();
    for &value in &spec.values {
        let mut cfg = spec.apply(&base, value);
        let dir = root.join(format!("{}_{}", spec.label(), value));
        cfg.output.dir = dir.clone();
        cfg.validate()
            .with_context(|| format!("{} = {value}", spec.label()))?;
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
        if spec.axis == Axis::M {
            fs::write(dir.join("exponents.json"), serde_json::to_string_pretty(&certificate(value))?)?;
        }
        children.push(Child { value, dir, exit: None });
    }

    let exe = std::env::current_exe()?;
    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![None; children.len()]);
    std::thread::scope(|s| {
        for _ in 0..spec.parallel_runs.min(children.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(child) = children.get(i) else { break };
                let code = run_child(&exe, &child.dir, threads, seed);
                results.lock().unwrap()[i] = Some(code);
            });
        }
    });
    for (child, code) in children.iter_mut().zip(results.into_inner().unwrap()) {
        child.exit = code.flatten();
    }

    let summary = summarize(&spec, &children)?;
    fs::write(root.join("sweep_summary.csv"), &summary)?;
    print!("{summary}");
    let failed = children.iter().filter(|c| c.exit != Some(0)).count();
    println!("{} of {} runs completed; summary in {}", children.len() - failed, children.len(), root.join("sweep_summary.csv").display());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

/// Runs one child process with its output captured in `dir/log.txt`.
fn run_child(exe: &Path, dir: &Path, threads: Option<usize>, seed: Option<u64>) -> Option<i32> {
    let log = fs::File::create(dir.join("log.txt")).ok()?;
    let mut cmd = Command::new(exe);
    cmd.arg("--output-dir").arg(dir);
    if let Some(t) = threads {
        cmd.arg("--threads").arg(t.to_string());
    }
    if let Some(s) = seed {
        cmd.arg("--seed").arg(s.to_string());
    }
    cmd.arg("simulate")
        .arg("--config")
        .arg(dir.join("config.json"))
        .stdin(Stdio::null())
        .stdout(log.try_clone().ok()?)
        .stderr(log);
    cmd.status().ok()?.code()
}

#[derive(Default)]
struct RunSummary {
    t_final: Option<f64>,
    gaps: Option<[f64; 3]>,
    checks: Vec<CheckReport>,
    final_n: Option<Vec<f64>>,
    cell_volume: f64,
}

impl RunSummary {
    fn deviation(&self, name: &str) -> String {
        self.checks
            .iter()
            .find(|c| c.name == name)
            .map(|c| format!("{:e}", c.max_deviation))
            .unwrap_or_default()
    }
}

fn read_run(dir: &Path) -> RunSummary {
    let mut s = RunSummary::default();
    if let Ok(text) = fs::read_to_string(dir.join("diagnostics.csv")) {
        if let Some(last) = parse_csv(&text).ok().and_then(|r| r.last().cloned()) {
            s.t_final = Some(last.t);
            s.gaps = Some([last.decay_gap_n, last.decay_gap_c, last.decay_gap_u]);
        }
    }
    if let Ok(text) = fs::read_to_string(dir.join("checks.json")) {
        s.checks = serde_json::from_str(&text).unwrap_or_default();
    }
    if let Ok(m) = read_manifest(&dir.join("manifest.json")) {
        if m.status == "complete" {
            s.cell_volume = m.config.grid().map(|g| g.cell_volume()).unwrap_or(0.0);
            s.final_n = m.snapshots.last().and_then(|snap| {
                let f = snap.file("n").ok()?;
                read_field(&dir.join(&f.path), Some(&f.sha256)).ok().map(|(_, d)| d)
            });
        }
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn summarize(spec: &SweepSpec, children: &[Child]) -> Result<String> {
    let runs: Vec<RunSummary> = children.iter().map(|c| read_run(&c.dir)).collect();
    let mut out = String::from(
        "value,status,exit_code,t_final,decay_gap_n,decay_gap_c,decay_gap_u,\
         mass_deviation,max_principle_deviation,divergence,c_mass_deviation,checks_passed,checks_total",
    );
    match spec.axis {
        Axis::Eps => out.push_str(",l1_to_previous"),
        Axis::M => out.push_str(",above_9_8,above_215_192,psi_ladder_steps,linear_ladder_limit"),
        Axis::Grid => {}
    }
    out.push('\n');
    for (i, (child, run)) in children.iter().zip(&runs).enumerate() {
        let status = if child.exit == Some(0) { "complete" } else { "failed" };
        let gap = |k: usize| opt(run.gaps.map(|g| g[k]));
        write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            child.value,
            status,
            child.exit.map(|c| c.to_string()).unwrap_or_default(),
            opt(run.t_final),
            gap(0),
            gap(1),
            gap(2),
            run.deviation("mass_conservation"),
            run.deviation("max_principle"),
            run.deviation("solenoidality"),
            run.deviation("c_mass_identity"),
            run.checks.iter().filter(|c| c.pass).count(),
            run.checks.len(),
        )?;
        match spec.axis {
            Axis::Eps => {
                let l1 = match (i.checked_sub(1).and_then(|p| runs[p].final_n.as_ref()), run.final_n.as_ref()) {
                    (Some(a), Some(b)) if a.len() == b.len() => {
                        Some(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * run.cell_volume)
                    }
                    _ => None,
                };
                write!(out, ",{}", opt(l1))?;
            }
            Axis::M => {
                let cert = certificate(child.value);
                let steps = cert["psi_ladder"]["steps"].as_u64().map(|s| s.to_string()).unwrap_or_default();
                let limit = match cert["linear_ladder"]["terminated"].as_str() {
                    Some(_) => opt(cert["linear_ladder"]["last"].as_f64()),
                    None => String::new(),
                };
                write!(out, ",{},{},{},{}", cert["above_9_8"], cert["above_215_192"], steps, limit)?;
            }
            Axis::Grid => {}
        }
        out.push('\n');
    }
    Ok(out)
}
