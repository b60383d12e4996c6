//! Scalar, vector and tensor fields as real samples on a periodic grid.
//!
//! Storage is flat `Vec<f64>` per component with `ix` fastest
//! (flat index `(iz*ny + iy)*nx + ix`). Tensor components are row-major:
//! component `(i,j)` of `E` lives in slot `3*i + j`.

use crate::error::{CvefError, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub comps: [Vec<f64>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub grid: Grid,
    pub comps: [Vec<f64>; 9],
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField {
            grid,
            data: vec![value; grid.len()],
        }
    }

    /// Sample a closure of the physical coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut data = vec![0.0; grid.len()];
        for (ix, iy, iz, idx) in grid.iter_indices() {
            let [x, y, z] = grid.coords(ix, iy, iz);
            data[idx] = f(x, y, z);
        }
        ScalarField { grid, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Mean value over the box.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// `self += a * other`, grids must match.
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
    }
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField {
            grid,
            comps: std::array::from_fn(|_| vec![0.0; grid.len()]),
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64, f64) -> [f64; 3]) -> Self {
        let mut v = Self::zeros(grid);
        for (ix, iy, iz, idx) in grid.iter_indices() {
            let [x, y, z] = grid.coords(ix, iy, iz);
            let val = f(x, y, z);
            for c in 0..3 {
                v.comps[c][idx] = val[c];
            }
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Largest pointwise Euclidean magnitude.
    pub fn max_norm(&self) -> f64 {
        let mut m = 0.0f64;
        for idx in 0..self.grid.len() {
            let s = self.comps[0][idx] * self.comps[0][idx]
                + self.comps[1][idx] * self.comps[1][idx]
                + self.comps[2][idx] * self.comps[2][idx];
            m = m.max(s);
        }
        m.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .fold(0.0, f64::max)
    }

    /// Discrete L2 norm, `sqrt(sum |v|^2 h^3)`.
    pub fn norm_l2(&self) -> f64 {
        let w = self.grid.cell_volume();
        let mut s = 0.0;
        for c in &self.comps {
            for v in c {
                s += v * v;
            }
        }
        (s * w).sqrt()
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.comps.iter_mut() {
            for v in c.iter_mut() {
                *v *= a;
            }
        }
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        debug_assert_eq!(self.grid, other.grid);
        for (sc, oc) in self.comps.iter_mut().zip(&other.comps) {
            for (s, o) in sc.iter_mut().zip(oc) {
                *s += a * o;
            }
        }
    }

    /// Componentwise mean (the k = 0 Fourier mode).
    pub fn mean(&self) -> [f64; 3] {
        let n = self.grid.len() as f64;
        std::array::from_fn(|c| self.comps[c].iter().sum::<f64>() / n)
    }
}

impl TensorField {
    pub fn zeros(grid: Grid) -> Self {
        TensorField {
            grid,
            comps: std::array::from_fn(|_| vec![0.0; grid.len()]),
        }
    }

    /// Component `(i,j)`, each in `0..3`.
    #[inline]
    pub fn comp(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[3 * i + j]
    }

    #[inline]
    pub fn comp_mut(&mut self, i: usize, j: usize) -> &mut Vec<f64> {
        &mut self.comps[3 * i + j]
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64, f64) -> [[f64; 3]; 3]) -> Self {
        let mut t = Self::zeros(grid);
        for (ix, iy, iz, idx) in grid.iter_indices() {
            let [x, y, z] = grid.coords(ix, iy, iz);
            let val = f(x, y, z);
            for i in 0..3 {
                for j in 0..3 {
                    t.comps[3 * i + j][idx] = val[i][j];
                }
            }
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .fold(0.0, f64::max)
    }

    pub fn axpy(&mut self, a: f64, other: &TensorField) {
        debug_assert_eq!(self.grid, other.grid);
        for (sc, oc) in self.comps.iter_mut().zip(&other.comps) {
            for (s, o) in sc.iter_mut().zip(oc) {
                *s += a * o;
            }
        }
    }
}

/// Check that two grids match, naming the operation on failure.
pub fn require_same_grid(a: Grid, b: Grid, what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(CvefError::GridMismatch(format!(
            "{what}: {:?} vs {:?}",
            a, b
        )))
    }
}
