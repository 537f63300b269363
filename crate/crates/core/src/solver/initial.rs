use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::IcConfig;
use super::{hydrostatic_pressure, project_initial, FieldState, ModelParams, Potential, Workspace};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::par;

/// Named presets for a cell-centered scalar.
///
/// Any preset with a `mean` is rescaled afterwards so its volume mean matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum ScalarInit {
    Constant {
        value: f64,
    },
    Gaussian {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
        #[serde(default)]
        background: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<f64>,
    },
    TwoBumps {
        amplitude: f64,
        width: f64,
        /// Defaults to the points at 1/4 and 3/4 of the box diagonal.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        centers: Option<[Vec<f64>; 2]>,
        #[serde(default)]
        background: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<f64>,
    },
    /// `mean * (1 + amplitude * xi)` with `xi` uniform in `[-1, 1]`, drawn from
    /// ChaCha8 seeded with the config seed.
    Perturbed {
        mean: f64,
        amplitude: f64,
    },
    /// `mean + amplitude * prod_a cos(pi k_a x_a / L_a)`.
    Cosine {
        mean: f64,
        amplitude: f64,
        mode: Vec<usize>,
    },
    Values {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum VelocityInit {
    #[default]
    Zero,
    /// Single cell from the stream function `A sin^2(pi x/Lx) sin^2(pi y/Ly)`,
    /// modulated by `sin^2(pi z/Lz)` in 3D.
    Vortex { amplitude: f64 },
}

fn gaussian(grid: &Grid, x: [f64; 3], center: &[f64], width: f64) -> f64 {
    let r2: f64 = (0..grid.dim()).map(|a| (x[a] - center[a]).powi(2)).sum();
    (-r2 / (2.0 * width * width)).exp()
}

impl ScalarInit {
    pub fn evaluate(&self, grid: &Grid, seed: u64) -> Result<Vec<f64>> {
        let nc = grid.n_cells();
        let dim = grid.dim();
        let check_center = |c: &[f64]| {
            if c.len() != dim {
                Err(Error::Config(format!("preset centers need {dim} coordinates")))
            } else {
                Ok(())
            }
        };
        let (mut values, mean) = match self {
            ScalarInit::Constant { value } => (vec![*value; nc], None),
            ScalarInit::Gaussian {
                amplitude,
                center,
                width,
                background,
                mean,
            } => {
                check_center(center)?;
                let v = (0..nc)
                    .map(|i| background + amplitude * gaussian(grid, grid.center(i), center, *width))
                    .collect();
                (v, *mean)
            }
            ScalarInit::TwoBumps {
                amplitude,
                width,
                centers,
                background,
                mean,
            } => {
                let e = grid.extent();
                let centers = centers.clone().unwrap_or_else(|| {
                    [
                        (0..dim).map(|a| 0.25 * e[a]).collect(),
                        (0..dim).map(|a| 0.75 * e[a]).collect(),
                    ]
                });
                check_center(&centers[0])?;
                check_center(&centers[1])?;
                let v = (0..nc)
                    .map(|i| {
                        let x = grid.center(i);
                        background
                            + amplitude
                                * (gaussian(grid, x, &centers[0], *width)
                                    + gaussian(grid, x, &centers[1], *width))
                    })
                    .collect();
                (v, *mean)
            }
            ScalarInit::Perturbed { mean, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let v = (0..nc)
                    .map(|_| mean * (1.0 + amplitude * rng.random_range(-1.0..=1.0)))
                    .collect();
                (v, None)
            }
            ScalarInit::Cosine {
                mean,
                amplitude,
                mode,
            } => {
                if mode.len() != dim {
                    return Err(Error::Config(format!("cosine mode needs {dim} entries")));
                }
                let e = grid.extent();
                let v = (0..nc)
                    .map(|i| {
                        let x = grid.center(i);
                        let prod: f64 = (0..dim)
                            .map(|a| (PI * mode[a] as f64 * x[a] / e[a]).cos())
                            .product();
                        mean + amplitude * prod
                    })
                    .collect();
                (v, None)
            }
            ScalarInit::Values { values } => {
                if values.len() != nc {
                    return Err(Error::Config(format!("values preset needs {nc} entries")));
                }
                (values.clone(), None)
            }
        };
        if let Some(target) = mean {
            let current = par::sum(nc, |i| values[i]) / nc as f64;
            if !(current > 0.0) {
                return Err(Error::InitialData("cannot rescale a field with zero mean".into()));
            }
            let scale = target / current;
            values.iter_mut().for_each(|v| *v *= scale);
        }
        Ok(values)
    }
}

impl VelocityInit {
    pub fn evaluate(&self, grid: &Grid) -> [Vec<f64>; 3] {
        let mut u = [
            vec![0.0; grid.n_faces(0)],
            vec![0.0; grid.n_faces(1)],
            vec![0.0; grid.n_faces(2)],
        ];
        let VelocityInit::Vortex { amplitude } = self else {
            return u;
        };
        let h = grid.spacing();
        let e = grid.extent();
        let psi = |i: usize, j: usize| {
            let x = i as f64 * h[0];
            let y = j as f64 * h[1];
            amplitude * (PI * x / e[0]).sin().powi(2) * (PI * y / e[1]).sin().powi(2)
        };
        let zfac = |k: usize| {
            if grid.dim() == 3 {
                (PI * (k as f64 + 0.5) * h[2] / e[2]).sin().powi(2)
            } else {
                1.0
            }
        };
        for (f, v) in u[0].iter_mut().enumerate() {
            let [i, j, k] = grid.face_coords(0, f);
            *v = zfac(k) * (psi(i, j + 1) - psi(i, j)) / h[1];
        }
        for (f, v) in u[1].iter_mut().enumerate() {
            let [i, j, k] = grid.face_coords(1, f);
            *v = -zfac(k) * (psi(i + 1, j) - psi(i, j)) / h[0];
        }
        u
    }
}

/// Builds the `t = 0` state: validates sign conditions, projects `u0` onto the
/// discretely divergence-free space and starts from the hydrostatic pressure.
pub fn init_state(params: &ModelParams, grid: &Grid, ic: &IcConfig, seed: u64) -> Result<FieldState> {
    if let Potential::Field(phi) = &params.potential {
        if phi.len() != grid.n_cells() {
            return Err(Error::Config("phi field does not match the grid".into()));
        }
    }
    let n = ic.n0.evaluate(grid, seed)?;
    let c = ic.c0.evaluate(grid, seed.wrapping_add(1))?;
    if let Some((i, v)) = n.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::InitialData(format!("n0 = {v} < 0 in cell {i}")));
    }
    if n.iter().all(|&v| v == 0.0) {
        return Err(Error::InitialData("n0 vanishes identically".into()));
    }
    if let Some((i, v)) = c.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::InitialData(format!("c0 = {v} < 0 in cell {i}")));
    }
    let mut u = ic.u0.evaluate(grid);
    let mut ws = Workspace::new(grid);
    project_initial(grid, &mut u, &mut ws)?;
    let p = hydrostatic_pressure(grid, params, &n, &mut ws)?;
    Ok(FieldState { t: 0.0, n, c, u, p })
}
