//! Preconditioned conjugate gradients and the grid operators it solves.

use std::sync::Arc;

use rayon::prelude::*;
use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::par;

pub trait LinearOperator: Sync {
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

pub trait Preconditioner {
    fn apply(&mut self, r: &[f64], z: &mut [f64]);
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `||r|| / ||b||`.
    pub residual: f64,
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(op: &impl LinearOperator) -> Self {
        let inv_diag = op
            .diagonal()
            .into_iter()
            .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        Self { inv_diag }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        let inv = &self.inv_diag;
        par::fill(z, |i| inv[i] * r[i]);
    }
}

/// Solves `A x = b` from the initial guess in `x`.
pub fn pcg(
    system: &'static str,
    op: &impl LinearOperator,
    pre: &mut impl Preconditioner,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let b_norm = par::dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    par::update(&mut r, |i, ax| b[i] - ax);
    let mut res = par::dot(&r, &r).sqrt() / b_norm;
    if res <= rtol {
        return Ok(SolveStats {
            iterations: 0,
            residual: res,
        });
    }
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = par::dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = par::dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverDiverged {
                system,
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        par::axpy(alpha, &p, x);
        par::axpy(-alpha, &ap, &mut r);
        res = par::dot(&r, &r).sqrt() / b_norm;
        if res <= rtol {
            return Ok(SolveStats {
                iterations: it,
                residual: res,
            });
        }
        pre.apply(&r, &mut z);
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        par::update(&mut p, |i, pi| z[i] + beta * pi);
    }
    Err(Error::SolverDiverged {
        system,
        iterations: max_iter,
        residual: res,
    })
}

/// `y = s x + dt (r x - Lap_h x)` on cells, with the Neumann (reflecting)
/// Laplacian. `s = 0, dt = 1, r = None` is the pressure operator `-Lap_h`.
pub struct CellOperator<'a> {
    pub grid: &'a Grid,
    pub identity: f64,
    pub dt: f64,
    pub reaction: Option<&'a [f64]>,
}

impl CellOperator<'_> {
    #[inline]
    fn row(&self, x: &[f64], idx: usize) -> (f64, f64) {
        let g = self.grid;
        let c = g.coords(idx);
        let h = g.spacing();
        let cells = g.cells();
        let xi = x[idx];
        let mut lap = 0.0;
        let mut diag = 0.0;
        for a in 0..g.dim() {
            let w = 1.0 / (h[a] * h[a]);
            let s = g.stride(a);
            if c[a] > 0 {
                lap += w * (xi - x[idx - s]);
                diag += w;
            }
            if c[a] + 1 < cells[a] {
                lap += w * (xi - x[idx + s]);
                diag += w;
            }
        }
        let r = self.reaction.map_or(0.0, |r| r[idx]);
        (
            self.identity * xi + self.dt * (r * xi + lap),
            self.identity + self.dt * (r + diag),
        )
    }
}

impl LinearOperator for CellOperator<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        par::fill(y, |i| self.row(x, i).0);
    }

    fn diagonal(&self) -> Vec<f64> {
        let ones = vec![1.0; self.grid.n_cells()];
        (0..self.grid.n_cells()).map(|i| self.row(&ones, i).1).collect()
    }
}

/// `y = x + dt (-Lap_h x)` for one staggered velocity component with no-slip
/// walls. Wall-normal faces are pinned (identity rows, never read by
/// neighbours); tangential walls use the odd reflection `u_ghost = -u`.
pub struct FaceOperator<'a> {
    pub grid: &'a Grid,
    pub axis: usize,
    pub dt: f64,
}

impl FaceOperator<'_> {
    #[inline]
    fn row(&self, x: &[f64], idx: usize) -> (f64, f64) {
        let g = self.grid;
        let fc = g.face_coords(self.axis, idx);
        if g.is_boundary_face(self.axis, fc) {
            return (x[idx], 1.0);
        }
        let h = g.spacing();
        let cells = g.cells();
        let xi = x[idx];
        let mut lap = 0.0;
        let mut diag = 0.0;
        for b in 0..g.dim() {
            let w = 1.0 / (h[b] * h[b]);
            let s = g.face_stride(self.axis, b);
            if b == self.axis {
                // neighbours are faces; wall faces hold zero
                lap += w * (xi - if fc[b] > 1 { x[idx - s] } else { 0.0 });
                lap += w * (xi - if fc[b] + 1 < cells[b] { x[idx + s] } else { 0.0 });
                diag += 2.0 * w;
            } else {
                let lo = if fc[b] > 0 { x[idx - s] } else { -xi };
                let hi = if fc[b] + 1 < cells[b] { x[idx + s] } else { -xi };
                lap += w * (2.0 * xi - lo - hi);
                diag += w * (2.0 + (fc[b] == 0) as u8 as f64 + (fc[b] + 1 == cells[b]) as u8 as f64);
            }
        }
        (xi + self.dt * lap, 1.0 + self.dt * diag)
    }

    /// `sum_faces x (-Lap_h x) * vol`: the discrete Dirichlet energy.
    pub fn dirichlet_energy(&self, x: &[f64]) -> f64 {
        let g = self.grid;
        let unit = FaceOperator {
            grid: g,
            axis: self.axis,
            dt: 1.0,
        };
        let vol = g.cell_volume();
        par::sum(x.len(), |i| {
            let fc = g.face_coords(self.axis, i);
            if g.is_boundary_face(self.axis, fc) {
                0.0
            } else {
                x[i] * (unit.row(x, i).0 - x[i]) * vol
            }
        })
    }
}

impl LinearOperator for FaceOperator<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        par::fill(y, |i| self.row(x, i).0);
    }

    fn diagonal(&self) -> Vec<f64> {
        let ones = vec![1.0; x_len(self.grid, self.axis)];
        (0..ones.len()).map(|i| self.row(&ones, i).1).collect()
    }
}

fn x_len(grid: &Grid, axis: usize) -> usize {
    grid.n_faces(axis)
}

/// Exact pseudo-inverse of the Neumann cell Laplacian `-Lap_h` by cosine
/// transforms; the constant mode is mapped to zero.
pub struct NeumannSpectral {
    grid: Grid,
    forward: Vec<Arc<dyn TransformType2And3<f64>>>,
    eig: Vec<Vec<f64>>,
    line_buf: Vec<f64>,
}

impl NeumannSpectral {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = DctPlanner::new();
        let h = grid.spacing();
        let cells = grid.cells();
        let mut forward = Vec::new();
        let mut eig = Vec::new();
        for a in 0..grid.dim() {
            let n = cells[a];
            forward.push(planner.plan_dct2(n));
            eig.push(
                (0..n)
                    .map(|k| {
                        let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
                        4.0 * s * s / (h[a] * h[a])
                    })
                    .collect(),
            );
        }
        Self {
            grid: grid.clone(),
            forward,
            eig,
            line_buf: vec![0.0; grid.n_cells()],
        }
    }

    /// Applies a 1D transform along `axis` to every grid line of `z`.
    fn transform_axis(&mut self, z: &mut [f64], axis: usize, inverse: bool) {
        let cells = self.grid.cells();
        let n = cells[axis];
        if n == 1 {
            return;
        }
        let plan = Arc::clone(&self.forward[axis]);
        let scale = 2.0 / n as f64;
        let run = |line: &mut [f64]| {
            if inverse {
                plan.process_dct3(line);
                line.iter_mut().for_each(|v| *v *= scale);
            } else {
                plan.process_dct2(line);
            }
        };
        if axis == 0 {
            z.par_chunks_mut(n).for_each(run);
            return;
        }
        let stride = self.grid.stride(axis);
        let (outer, inner) = if axis == 1 {
            (cells[2], cells[0])
        } else {
            (1, cells[0] * cells[1])
        };
        let block = stride * n;
        let buf = &mut self.line_buf;
        // gather lines contiguously
        let mut line = 0;
        for o in 0..outer {
            for i in 0..inner {
                let base = o * block + i;
                for t in 0..n {
                    buf[line * n + t] = z[base + t * stride];
                }
                line += 1;
            }
        }
        buf[..line * n].par_chunks_mut(n).for_each(run);
        let mut line = 0;
        for o in 0..outer {
            for i in 0..inner {
                let base = o * block + i;
                for t in 0..n {
                    z[base + t * stride] = buf[line * n + t];
                }
                line += 1;
            }
        }
    }
}

impl Preconditioner for NeumannSpectral {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        let dim = self.grid.dim();
        for a in 0..dim {
            self.transform_axis(z, a, false);
        }
        let g = self.grid.clone();
        let eig = &self.eig;
        par::update(z, |idx, v| {
            let c = g.coords(idx);
            let lambda: f64 = (0..dim).map(|a| eig[a][c[a]]).sum();
            if lambda == 0.0 {
                0.0
            } else {
                v / lambda
            }
        });
        for a in 0..dim {
            self.transform_axis(z, a, true);
        }
    }
}

/// Subtracts the volume mean.
pub fn remove_mean(x: &mut [f64]) {
    let mean = par::sum(x.len(), |i| x[i]) / x.len() as f64;
    par::update(x, |_, v| v - mean);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(op: &impl LinearOperator, n: usize) -> Vec<Vec<f64>> {
        let mut cols = Vec::new();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let mut y = vec![0.0; n];
            op.apply(&e, &mut y);
            cols.push(y);
        }
        cols
    }

    #[test]
    fn operators_are_symmetric_with_consistent_diagonal() {
        let g = Grid::new(3, &[4, 3, 2], &[1.0, 0.7, 0.4]).unwrap();
        let cell = CellOperator {
            grid: &g,
            identity: 1.0,
            dt: 0.3,
            reaction: None,
        };
        let a = dense(&cell, g.n_cells());
        let d = cell.diagonal();
        for i in 0..g.n_cells() {
            assert!((a[i][i] - d[i]).abs() < 1e-12);
            for j in 0..g.n_cells() {
                assert!((a[i][j] - a[j][i]).abs() < 1e-12);
                if i != j {
                    assert!(a[i][j] <= 0.0);
                }
            }
        }
        for axis in 0..3 {
            let op = FaceOperator {
                grid: &g,
                axis,
                dt: 0.2,
            };
            let n = g.n_faces(axis);
            let a = dense(&op, n);
            let d = op.diagonal();
            for i in 0..n {
                assert!((a[i][i] - d[i]).abs() < 1e-12);
                for j in 0..n {
                    assert!((a[i][j] - a[j][i]).abs() < 1e-12, "axis {axis} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn spectral_preconditioner_inverts_neumann_laplacian() {
        for g in [
            Grid::new(2, &[8, 5], &[1.0, 2.0]).unwrap(),
            Grid::new(3, &[4, 3, 5], &[1.0, 0.5, 2.0]).unwrap(),
        ] {
            let n = g.n_cells();
            let mut x: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64).cos()).collect();
            remove_mean(&mut x);
            let op = CellOperator {
                grid: &g,
                identity: 0.0,
                dt: 1.0,
                reaction: None,
            };
            let mut b = vec![0.0; n];
            op.apply(&x, &mut b);
            let mut z = vec![0.0; n];
            NeumannSpectral::new(&g).apply(&b, &mut z);
            for i in 0..n {
                assert!((z[i] - x[i]).abs() < 1e-12, "{} vs {}", z[i], x[i]);
            }
        }
    }

    #[test]
    fn pcg_solves_helmholtz() {
        let g = Grid::new(2, &[16, 16], &[1.0, 1.0]).unwrap();
        let reaction = vec![0.5; g.n_cells()];
        let op = CellOperator {
            grid: &g,
            identity: 1.0,
            dt: 0.01,
            reaction: Some(&reaction),
        };
        let truth: Vec<f64> = (0..g.n_cells()).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut b = vec![0.0; g.n_cells()];
        op.apply(&truth, &mut b);
        let mut x = vec![0.0; g.n_cells()];
        let stats = pcg("test", &op, &mut Jacobi::new(&op), &b, &mut x, 1e-13, 500).unwrap();
        assert!(stats.residual <= 1e-13);
        for i in 0..x.len() {
            assert!((x[i] - truth[i]).abs() < 1e-11);
        }
    }
}
