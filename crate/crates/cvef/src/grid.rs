//! Uniform periodic grid on the torus `[0,Lx) x [0,Ly) x [0,Lz)`.

use crate::error::{CvefError, Result};

/// Grid resolution and box geometry. Sample `(ix,iy,iz)` lives at
/// `(ix*hx, iy*hy, iz*hz)` and flat index `(iz*ny + iy)*nx + ix`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
}

impl Grid {
    /// Cubic grid with `n` points per axis and side length `l`.
    pub fn cubic(n: usize, l: f64) -> Result<Self> {
        Self::new([n, n, n], [l, l, l])
    }

    pub fn new(n: [usize; 3], length: [f64; 3]) -> Result<Self> {
        for (&ni, axis) in n.iter().zip(["x", "y", "z"]) {
            if ni < 4 || ni % 2 != 0 {
                return Err(CvefError::InvalidParams(format!(
                    "grid.n: N{axis} = {ni} must be even and >= 4"
                )));
            }
        }
        for (&li, axis) in length.iter().zip(["x", "y", "z"]) {
            if !(li > 0.0) || !li.is_finite() {
                return Err(CvefError::InvalidParams(format!(
                    "grid.length: L{axis} = {li} must be positive and finite"
                )));
            }
        }
        Ok(Grid {
            nx: n[0],
            ny: n[1],
            nz: n[2],
            lx: length[0],
            ly: length[1],
            lz: length[2],
        })
    }

    /// Total number of samples.
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing per axis; `spacing * n == length` exactly by construction
    /// (spacing is always derived, never stored).
    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        [
            self.lx / self.nx as f64,
            self.ly / self.ny as f64,
            self.lz / self.nz as f64,
        ]
    }

    /// Smallest spacing, used by CFL checks.
    #[inline]
    pub fn h_min(&self) -> f64 {
        let [hx, hy, hz] = self.spacing();
        hx.min(hy).min(hz)
    }

    /// Box volume.
    #[inline]
    pub fn volume(&self) -> f64 {
        self.lx * self.ly * self.lz
    }

    /// Quadrature weight of one sample (uniform trapezoidal on the torus).
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    /// Flat index of sample `(ix, iy, iz)`.
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.ny + iy) * self.nx + ix
    }

    /// Physical coordinates of sample `(ix, iy, iz)`.
    #[inline]
    pub fn coords(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        let [hx, hy, hz] = self.spacing();
        [ix as f64 * hx, iy as f64 * hy, iz as f64 * hz]
    }

    /// Iterate `(ix, iy, iz, flat_index)` in storage order.
    pub fn iter_indices(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        (0..nz).flat_map(move |iz| {
            (0..ny).flat_map(move |iy| {
                (0..nx).map(move |ix| (ix, iy, iz, (iz * ny + iy) * nx + ix))
            })
        })
    }

    /// Grid with the same resolution on a box rescaled by `factor`.
    pub fn rescaled(&self, factor: f64) -> Grid {
        Grid {
            lx: self.lx * factor,
            ly: self.ly * factor,
            lz: self.lz * factor,
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_and_tiny_resolutions() {
        assert!(Grid::cubic(3, 1.0).is_err());
        assert!(Grid::cubic(5, 1.0).is_err());
        assert!(Grid::cubic(2, 1.0).is_err());
        assert!(Grid::cubic(4, 1.0).is_ok());
    }

    #[test]
    fn spacing_times_n_is_length() {
        let g = Grid::new([8, 16, 32], [1.0, 2.5, 6.25]).unwrap();
        let [hx, hy, hz] = g.spacing();
        assert_eq!(hx * g.nx as f64, g.lx);
        assert_eq!(hy * g.ny as f64, g.ly);
        assert_eq!(hz * g.nz as f64, g.lz);
    }

    #[test]
    fn flat_index_matches_layout() {
        let g = Grid::cubic(4, 1.0).unwrap();
        assert_eq!(g.idx(1, 2, 3), (3 * 4 + 2) * 4 + 1);
        let mut seen = 0;
        for (ix, iy, iz, f) in g.iter_indices() {
            assert_eq!(f, g.idx(ix, iy, iz));
            assert_eq!(f, seen);
            seen += 1;
        }
        assert_eq!(seen, g.len());
    }
}
