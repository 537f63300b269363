//! Uniform rectangular grid with a staggered (MAC) velocity layout.
//!
//! Cell arrays are flat, x-fastest: `idx = i + nx * (j + ny * k)`. The
//! component `a` of the velocity lives on faces normal to axis `a`, stored in an
//! array whose extent along `a` is one larger than the cell count. In 2D the
//! third axis has a single cell of unit thickness.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; 3],
    extent: [f64; 3],
    h: [f64; 3],
}

impl Grid {
    pub fn new(dim: usize, cells: &[usize], extent: &[f64]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Config(format!("dim must be 2 or 3, got {dim}")));
        }
        if cells.len() != dim || extent.len() != dim {
            return Err(Error::Config(format!(
                "grid.cells and grid.extent need {dim} entries"
            )));
        }
        let mut c = [1usize; 3];
        let mut e = [1.0f64; 3];
        for a in 0..dim {
            if cells[a] == 0 {
                return Err(Error::Config("cell counts must be positive".into()));
            }
            if !(extent[a] > 0.0 && extent[a].is_finite()) {
                return Err(Error::Config("extents must be positive".into()));
            }
            c[a] = cells[a];
            e[a] = extent[a];
        }
        let h = [e[0] / c[0] as f64, e[1] / c[1] as f64, e[2] / c[2] as f64];
        Ok(Self {
            dim,
            cells: c,
            extent: e,
            h,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.h
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.extent.iter().product()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.cells[0] * (j + self.cells[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.cells[0];
        let r = idx / self.cells[0];
        [i, r % self.cells[1], r / self.cells[1]]
    }

    /// Cell-center position.
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        [
            (c[0] as f64 + 0.5) * self.h[0],
            (c[1] as f64 + 0.5) * self.h[1],
            (c[2] as f64 + 0.5) * self.h[2],
        ]
    }

    /// Cell stride along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.cells[0],
            _ => self.cells[0] * self.cells[1],
        }
    }

    /// Array extents of the face array for velocity component `axis`.
    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.cells;
        d[axis] += 1;
        d
    }

    pub fn n_faces(&self, axis: usize) -> usize {
        if axis >= self.dim {
            0
        } else {
            self.face_dims(axis).iter().product()
        }
    }

    /// Index into the face array of component `axis`.
    #[inline]
    pub fn face_idx(&self, axis: usize, i: usize, j: usize, k: usize) -> usize {
        let d = self.face_dims(axis);
        i + d[0] * (j + d[1] * k)
    }

    #[inline]
    pub fn face_stride(&self, axis: usize, along: usize) -> usize {
        let d = self.face_dims(axis);
        match along {
            0 => 1,
            1 => d[0],
            _ => d[0] * d[1],
        }
    }

    /// Face array position -> cell-style coordinates.
    #[inline]
    pub fn face_coords(&self, axis: usize, idx: usize) -> [usize; 3] {
        let d = self.face_dims(axis);
        let i = idx % d[0];
        let r = idx / d[0];
        [i, r % d[1], r / d[1]]
    }

    /// Faces normal to `axis` at index 0 or `cells[axis]` lie on the wall.
    #[inline]
    pub fn is_boundary_face(&self, axis: usize, fc: [usize; 3]) -> bool {
        fc[axis] == 0 || fc[axis] == self.cells[axis]
    }

    /// Swaps two axes (data must be permuted with [`Self::permute_cells`]).
    pub fn with_axes_swapped(&self, a: usize, b: usize) -> Grid {
        let mut g = self.clone();
        g.cells.swap(a, b);
        g.extent.swap(a, b);
        g.h.swap(a, b);
        g
    }

    /// Reorders a cell array for the grid obtained by swapping axes `a` and `b`.
    pub fn permute_cells(&self, field: &[f64], a: usize, b: usize) -> Vec<f64> {
        let swapped = self.with_axes_swapped(a, b);
        let mut out = vec![0.0; field.len()];
        for (idx, &v) in field.iter().enumerate() {
            let mut c = self.coords(idx);
            c.swap(a, b);
            out[swapped.idx(c[0], c[1], c[2])] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let g = Grid::new(3, &[4, 3, 2], &[1.0, 2.0, 3.0]).unwrap();
        for idx in 0..g.n_cells() {
            let [i, j, k] = g.coords(idx);
            assert_eq!(g.idx(i, j, k), idx);
        }
        for a in 0..3 {
            for f in 0..g.n_faces(a) {
                let [i, j, k] = g.face_coords(a, f);
                assert_eq!(g.face_idx(a, i, j, k), f);
            }
        }
        assert_eq!(g.n_faces(0), 5 * 3 * 2);
        assert!((g.cell_volume() * g.n_cells() as f64 - g.domain_volume()).abs() < 1e-12);
    }

    #[test]
    fn two_d_has_unit_depth() {
        let g = Grid::new(2, &[8, 4], &[2.0, 1.0]).unwrap();
        assert_eq!(g.cells(), [8, 4, 1]);
        assert_eq!(g.n_faces(2), 0);
        assert_eq!(g.cell_volume(), 0.25 * 0.25);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Grid::new(1, &[4], &[1.0]).is_err());
        assert!(Grid::new(2, &[4, 0], &[1.0, 1.0]).is_err());
        assert!(Grid::new(2, &[4, 4], &[1.0]).is_err());
        assert!(Grid::new(2, &[4, 4], &[1.0, -1.0]).is_err());
    }
}
