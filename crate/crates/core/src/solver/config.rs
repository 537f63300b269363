use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::initial::{ScalarInit, VelocityInit};
use super::{ModelParams, Potential};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// JSON run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dim: usize,
    pub grid: GridConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub phi: PhiConfig,
    pub ic: IcConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Seed of the counter-based generator used by randomized presets.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub diagnostics: DiagnosticsOptions,
    #[serde(default)]
    pub checks: CheckOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub cells: Vec<usize>,
    pub extent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub m: f64,
    #[serde(rename = "k_D", default = "one")]
    pub k_d: f64,
    pub eps: f64,
}

fn one() -> f64 {
    1.0
}

/// Either a constant `gradient` or per-cell `field` values; the default is zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcConfig {
    pub n0: ScalarInit,
    pub c0: ScalarInit,
    #[serde(default)]
    pub u0: VelocityInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub dt_max: f64,
    /// Time between diagnostics samples.
    pub sample_every: f64,
    /// Use `dt_max` as the step regardless of stability; violations abort the run.
    #[serde(default)]
    pub force_dt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Write a snapshot every this many samples (the final state is always written).
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("run")
}

fn default_snapshot_every() -> usize {
    1
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            snapshot_every: default_snapshot_every(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsOptions {
    /// Extra `L^p` exponents on top of `{2, 4, m}`.
    #[serde(default)]
    pub p_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckOptions {
    #[serde(default = "default_c_mass_tol")]
    pub c_mass_tol: f64,
    #[serde(default = "default_l2_rel")]
    pub c_l2_rel: f64,
    #[serde(default = "default_decay")]
    pub decay_thresholds: [f64; 3],
    #[serde(default = "one")]
    pub window: f64,
    #[serde(default = "default_cap")]
    pub quasi_energy_cap: f64,
    #[serde(default = "default_transient")]
    pub transient_windows: usize,
}

fn default_c_mass_tol() -> f64 {
    1e-3
}
fn default_l2_rel() -> f64 {
    1e-6
}
fn default_decay() -> [f64; 3] {
    [0.1; 3]
}
fn default_cap() -> f64 {
    1e3
}
fn default_transient() -> usize {
    2
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            c_mass_tol: default_c_mass_tol(),
            c_l2_rel: default_l2_rel(),
            decay_thresholds: default_decay(),
            window: 1.0,
            quasi_energy_cap: default_cap(),
            transient_windows: default_transient(),
        }
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.model_params()?;
        let t = &self.time;
        if !(t.t_final >= 0.0 && t.t_final.is_finite()) {
            return Err(Error::Config(format!("time.t_final = {} must be >= 0", t.t_final)));
        }
        if !(t.dt_max > 0.0) {
            return Err(Error::Config(format!("time.dt_max = {} must be > 0", t.dt_max)));
        }
        if !(t.sample_every > 0.0) {
            return Err(Error::Config(format!(
                "time.sample_every = {} must be > 0",
                t.sample_every
            )));
        }
        if self.output.snapshot_every == 0 {
            return Err(Error::Config("output.snapshot_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, &self.grid.cells, &self.grid.extent)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let potential = match (&self.phi.gradient, &self.phi.field) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either phi.gradient or phi.field".into()))
            }
            (Some(g), None) => {
                if g.len() != self.dim {
                    return Err(Error::Config(format!("phi.gradient needs {} entries", self.dim)));
                }
                let mut v = [0.0; 3];
                v[..g.len()].copy_from_slice(g);
                Potential::Gradient(v)
            }
            (None, Some(f)) => {
                let n: usize = self.grid.cells.iter().product();
                if f.len() != n {
                    return Err(Error::Config(format!("phi.field needs {n} cell values")));
                }
                Potential::Field(f.clone())
            }
            (None, None) => Potential::Gradient([0.0; 3]),
        };
        ModelParams::new(self.model.m, self.model.k_d, self.model.eps, potential)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "dim": 2,
        "grid": {"cells": [16, 16], "extent": [1.0, 1.0]},
        "model": {"m": 1.2, "k_D": 1.0, "eps": 0.05},
        "phi": {"gradient": [0.0, -1.0]},
        "ic": {
            "n0": {"preset": "gaussian", "amplitude": 2.0, "center": [0.5, 0.5], "width": 0.1},
            "c0": {"preset": "constant", "value": 1.0},
            "u0": {"preset": "zero"}
        },
        "time": {"t_final": 0.1, "dt_max": 0.01, "sample_every": 0.05},
        "output": {"dir": "out"}
    }"#;

    #[test]
    fn parses_documented_keys() {
        let cfg = SimConfig::from_json(SAMPLE).unwrap();
        assert_eq!(cfg.grid.cells, vec![16, 16]);
        assert_eq!(cfg.model.k_d, 1.0);
        assert_eq!(cfg.checks, CheckOptions::default());
        let p = cfg.model_params().unwrap();
        assert_eq!(p.potential, Potential::Gradient([0.0, -1.0, 0.0]));
    }

    #[test]
    fn rejects_malformed_and_invalid() {
        let err = SimConfig::from_json("{\"dim\": 2,").unwrap_err();
        assert!(err.to_string().contains("line"));
        let bad = SAMPLE.replace("\"eps\": 0.05", "\"eps\": 1.5");
        assert!(SimConfig::from_json(&bad).is_err());
        let bad = SAMPLE.replace("\"dt_max\": 0.01", "\"dt_max\": 0.0");
        assert!(SimConfig::from_json(&bad).is_err());
        let bad = SAMPLE.replace("\"dim\": 2", "\"dim\": 2, \"bogus\": 1");
        assert!(SimConfig::from_json(&bad).is_err());
    }
}
