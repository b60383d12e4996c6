//! Spectral workspace: 3D real-to-complex FFTs, wavenumber tables, the 2/3
//! dealias mask, and the differential operators built on them (gradient,
//! jacobian, divergence, row-curl, and the Lame operator with its inverse).
//!
//! Spectra are stored half-complex: real fields transform along x first, so
//! only `nx/2 + 1` x-frequencies are kept. Flat spectral index is
//! `(iz*ny + iy)*hx + ikx` with `ikx` fastest.
//!
//! Conventions:
//! - forward transform unnormalized, inverse carries `1/(nx ny nz)`;
//! - odd (derivative) multipliers zero the Nyquist wavenumber so transforms
//!   of real fields stay consistent;
//! - the Lame symbol uses the true wavenumber on every mode, so
//!   `lame_solve` inverts `lame_apply` exactly on mean-free fields.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{CvefError, Result};
use crate::field::{ScalarField, TensorField, VectorField};
use crate::grid::Grid;

pub type Spec = Vec<Complex64>;

/// Check the strong-ellipticity condition for the Lame constants.
pub fn check_ellipticity(mu: f64, lambda: f64) -> Result<()> {
    if !(mu > 0.0) || !(2.0 * mu + 3.0 * lambda > 0.0) {
        return Err(CvefError::InvalidParams(format!(
            "Lame constants must satisfy mu > 0 and 2 mu + 3 lambda > 0 (got mu = {mu}, lambda = {lambda})"
        )));
    }
    Ok(())
}

/// Transform plans, wavenumber tables and scratch for one grid.
///
/// Methods take `&mut self` (scratch reuse); use one workspace per thread.
pub struct SpectralWorkspace {
    grid: Grid,
    hx: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    fwd_z: Arc<dyn Fft<f64>>,
    inv_z: Arc<dyn Fft<f64>>,
    /// True physical wavenumber per axis index (x table has `hx` entries).
    k_full: [Vec<f64>; 3],
    /// Wavenumber for odd (derivative) multipliers: Nyquist entry zeroed.
    k_deriv: [Vec<f64>; 3],
    /// Per-axis 2/3-rule keep flags.
    keep: [Vec<bool>; 3],
    scratch: Vec<Complex64>,
    line_re: Vec<f64>,
    plane: Vec<Complex64>,
    slab: Vec<Complex64>,
    work: Vec<Complex64>,
}

fn axis_tables(n: usize, l: f64, half: bool) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let base = 2.0 * std::f64::consts::PI / l;
    let keep_max = (n / 3) as i64;
    let count = if half { n / 2 + 1 } else { n };
    let mut full = Vec::with_capacity(count);
    let mut deriv = Vec::with_capacity(count);
    let mut keep = Vec::with_capacity(count);
    for i in 0..count {
        let ki = if i <= n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        };
        full.push(base * ki as f64);
        deriv.push(if i == n / 2 { 0.0 } else { base * ki as f64 });
        keep.push(ki.abs() <= keep_max);
    }
    (full, deriv, keep)
}

impl SpectralWorkspace {
    pub fn new(grid: Grid) -> Self {
        let mut rplanner = RealFftPlanner::<f64>::new();
        let mut planner = FftPlanner::<f64>::new();
        let hx = grid.nx / 2 + 1;
        let r2c = rplanner.plan_fft_forward(grid.nx);
        let c2r = rplanner.plan_fft_inverse(grid.nx);
        let fwd_y = planner.plan_fft_forward(grid.ny);
        let inv_y = planner.plan_fft_inverse(grid.ny);
        let fwd_z = planner.plan_fft_forward(grid.nz);
        let inv_z = planner.plan_fft_inverse(grid.nz);
        let (kfx, kdx, kpx) = axis_tables(grid.nx, grid.lx, true);
        let (kfy, kdy, kpy) = axis_tables(grid.ny, grid.ly, false);
        let (kfz, kdz, kpz) = axis_tables(grid.nz, grid.lz, false);
        let scratch_len = [
            r2c.get_scratch_len(),
            c2r.get_scratch_len(),
            fwd_y.get_inplace_scratch_len(),
            inv_y.get_inplace_scratch_len(),
            fwd_z.get_inplace_scratch_len(),
            inv_z.get_inplace_scratch_len(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        SpectralWorkspace {
            grid,
            hx,
            r2c,
            c2r,
            fwd_y,
            inv_y,
            fwd_z,
            inv_z,
            k_full: [kfx, kfy, kfz],
            k_deriv: [kdx, kdy, kdz],
            keep: [kpx, kpy, kpz],
            scratch: vec![Complex64::default(); scratch_len],
            line_re: vec![0.0; grid.nx],
            plane: vec![Complex64::default(); hx * grid.ny],
            slab: vec![Complex64::default(); hx * grid.nz],
            work: vec![Complex64::default(); hx * grid.ny * grid.nz],
        }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Number of retained x-frequencies, `nx/2 + 1`.
    #[inline]
    pub fn hx(&self) -> usize {
        self.hx
    }

    /// Length of a half-complex spectrum.
    #[inline]
    pub fn spec_len(&self) -> usize {
        self.hx * self.grid.ny * self.grid.nz
    }

    pub fn zero_spec(&self) -> Spec {
        vec![Complex64::default(); self.spec_len()]
    }

    pub(crate) fn k_full_axis(&self, axis: usize) -> &[f64] {
        &self.k_full[axis]
    }

    pub(crate) fn k_deriv_axis(&self, axis: usize) -> &[f64] {
        &self.k_deriv[axis]
    }

    pub(crate) fn keep_axis(&self, axis: usize) -> &[bool] {
        &self.keep[axis]
    }

    // ----- transforms -----

    fn pass_y(&mut self, data: &mut [Complex64], forward: bool) {
        let (hx, ny, nz) = (self.hx, self.grid.ny, self.grid.nz);
        let plan = if forward {
            self.fwd_y.clone()
        } else {
            self.inv_y.clone()
        };
        for iz in 0..nz {
            let plane = &mut data[iz * hx * ny..(iz + 1) * hx * ny];
            for iy in 0..ny {
                let row = iy * hx;
                for ik in 0..hx {
                    self.plane[ik * ny + iy] = plane[row + ik];
                }
            }
            plan.process_with_scratch(&mut self.plane, &mut self.scratch);
            for ik in 0..hx {
                let col = ik * ny;
                for iy in 0..ny {
                    plane[iy * hx + ik] = self.plane[col + iy];
                }
            }
        }
    }

    fn pass_z(&mut self, data: &mut [Complex64], forward: bool) {
        let (hx, ny, nz) = (self.hx, self.grid.ny, self.grid.nz);
        let plan = if forward {
            self.fwd_z.clone()
        } else {
            self.inv_z.clone()
        };
        for iy in 0..ny {
            for iz in 0..nz {
                let row = (iz * ny + iy) * hx;
                for ik in 0..hx {
                    self.slab[ik * nz + iz] = data[row + ik];
                }
            }
            plan.process_with_scratch(&mut self.slab, &mut self.scratch);
            for iz in 0..nz {
                let row = (iz * ny + iy) * hx;
                for ik in 0..hx {
                    data[row + ik] = self.slab[ik * nz + iz];
                }
            }
        }
    }

    /// Forward transform of a real field into a caller-provided spectrum.
    pub fn forward_into(&mut self, f: &[f64], out: &mut [Complex64]) {
        let (nx, ny, nz) = (self.grid.nx, self.grid.ny, self.grid.nz);
        debug_assert_eq!(f.len(), self.grid.len());
        debug_assert_eq!(out.len(), self.spec_len());
        for line in 0..ny * nz {
            self.line_re.copy_from_slice(&f[line * nx..(line + 1) * nx]);
            self.r2c
                .process_with_scratch(
                    &mut self.line_re,
                    &mut out[line * self.hx..(line + 1) * self.hx],
                    &mut self.scratch,
                )
                .expect("r2c lengths are fixed by construction");
        }
        self.pass_y(out, true);
        self.pass_z(out, true);
    }

    pub fn forward(&mut self, f: &[f64]) -> Spec {
        let mut out = self.zero_spec();
        self.forward_into(f, &mut out);
        out
    }

    /// Inverse transform (with `1/n` normalization) into a real field.
    pub fn inverse_into(&mut self, spec: &[Complex64], out: &mut [f64]) {
        let (nx, ny, nz) = (self.grid.nx, self.grid.ny, self.grid.nz);
        debug_assert_eq!(spec.len(), self.spec_len());
        debug_assert_eq!(out.len(), self.grid.len());
        let mut work = std::mem::take(&mut self.work);
        work.copy_from_slice(spec);
        self.pass_z(&mut work, false);
        self.pass_y(&mut work, false);
        let scale = 1.0 / self.grid.len() as f64;
        let nyq = nx / 2;
        for line in 0..ny * nz {
            let ls = &mut work[line * self.hx..(line + 1) * self.hx];
            // project away roundoff in the bins c2r requires to be real
            ls[0].im = 0.0;
            ls[nyq].im = 0.0;
            self.c2r
                .process_with_scratch(
                    ls,
                    &mut self.line_re,
                    &mut self.scratch,
                )
                .expect("c2r lengths are fixed by construction");
            let dst = &mut out[line * nx..(line + 1) * nx];
            for (d, s) in dst.iter_mut().zip(&self.line_re) {
                *d = s * scale;
            }
        }
        self.work = work;
    }

    pub fn inverse(&mut self, spec: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        self.inverse_into(spec, &mut out);
        out
    }

    // ----- spectral multipliers -----

    /// Multiply by `i k_axis` (spectral derivative along one axis).
    pub fn deriv_into(&self, spec: &[Complex64], axis: usize, out: &mut [Complex64]) {
        debug_assert_eq!(spec.len(), out.len());
        let kd = &self.k_deriv[axis];
        match axis {
            0 => {
                let hx = self.hx;
                for (line_s, line_o) in spec.chunks_exact(hx).zip(out.chunks_exact_mut(hx)) {
                    for ik in 0..hx {
                        let k = kd[ik];
                        let v = line_s[ik];
                        line_o[ik] = Complex64::new(-v.im * k, v.re * k);
                    }
                }
            }
            1 => {
                let hx = self.hx;
                let ny = self.grid.ny;
                for (chunk_s, chunk_o) in spec
                    .chunks_exact(hx * ny)
                    .zip(out.chunks_exact_mut(hx * ny))
                {
                    for iy in 0..ny {
                        let k = kd[iy];
                        let s = &chunk_s[iy * hx..(iy + 1) * hx];
                        let o = &mut chunk_o[iy * hx..(iy + 1) * hx];
                        for (ov, v) in o.iter_mut().zip(s) {
                            *ov = Complex64::new(-v.im * k, v.re * k);
                        }
                    }
                }
            }
            _ => {
                let w = self.hx * self.grid.ny;
                for (iz, (chunk_s, chunk_o)) in spec
                    .chunks_exact(w)
                    .zip(out.chunks_exact_mut(w))
                    .enumerate()
                {
                    let k = kd[iz];
                    for (ov, v) in chunk_o.iter_mut().zip(chunk_s) {
                        *ov = Complex64::new(-v.im * k, v.re * k);
                    }
                }
            }
        }
    }

    pub fn deriv(&self, spec: &[Complex64], axis: usize) -> Spec {
        let mut out = vec![Complex64::default(); spec.len()];
        self.deriv_into(spec, axis, &mut out);
        out
    }

    /// Zero every mode outside the 2/3 ball (per-axis box rule).
    pub fn apply_mask(&self, spec: &mut [Complex64]) {
        let (hx, ny, nz) = (self.hx, self.grid.ny, self.grid.nz);
        let mut idx = 0;
        for iz in 0..nz {
            let kz = self.keep[2][iz];
            for iy in 0..ny {
                let keep_line = kz && self.keep[1][iy];
                if !keep_line {
                    for v in &mut spec[idx..idx + hx] {
                        *v = Complex64::default();
                    }
                } else {
                    for (ik, v) in spec[idx..idx + hx].iter_mut().enumerate() {
                        if !self.keep[0][ik] {
                            *v = Complex64::default();
                        }
                    }
                }
                idx += hx;
            }
        }
    }

    /// Dealias a real field in place (forward, mask, inverse).
    pub fn dealias_scalar(&mut self, f: &mut ScalarField) {
        let mut s = self.forward(&f.data);
        self.apply_mask(&mut s);
        self.inverse_into(&s, &mut f.data);
    }

    // ----- differential operators -----

    /// Spectral gradient of a scalar field.
    pub fn gradient(&mut self, f: &ScalarField) -> VectorField {
        let s = self.forward(&f.data);
        self.gradient_of_spec(&s)
    }

    /// Gradient from an already-transformed scalar.
    pub fn gradient_of_spec(&mut self, s: &[Complex64]) -> VectorField {
        let mut out = VectorField::zeros(self.grid);
        let mut d = vec![Complex64::default(); s.len()];
        for axis in 0..3 {
            self.deriv_into(s, axis, &mut d);
            self.inverse_into(&d, &mut out.comps[axis]);
        }
        out
    }

    /// Jacobian of a vector field; row `i` holds the gradient of `v_i`.
    pub fn jacobian(&mut self, v: &VectorField) -> TensorField {
        let mut out = TensorField::zeros(self.grid);
        let mut s = self.zero_spec();
        let mut d = self.zero_spec();
        for i in 0..3 {
            self.forward_into(&v.comps[i], &mut s);
            for j in 0..3 {
                self.deriv_into(&s, j, &mut d);
                self.inverse_into(&d, out.comp_mut(i, j));
            }
        }
        out
    }

    /// Jacobian from already-transformed components.
    pub fn jacobian_of_specs(&mut self, specs: &[&[Complex64]; 3]) -> TensorField {
        let mut out = TensorField::zeros(self.grid);
        let mut d = self.zero_spec();
        for i in 0..3 {
            for j in 0..3 {
                self.deriv_into(specs[i], j, &mut d);
                self.inverse_into(&d, out.comp_mut(i, j));
            }
        }
        out
    }

    /// Spectral divergence of a vector field.
    pub fn divergence_vec(&mut self, v: &VectorField) -> ScalarField {
        let mut acc = self.zero_spec();
        let mut s = self.zero_spec();
        let mut d = self.zero_spec();
        for axis in 0..3 {
            self.forward_into(&v.comps[axis], &mut s);
            self.deriv_into(&s, axis, &mut d);
            for (a, b) in acc.iter_mut().zip(&d) {
                *a += b;
            }
        }
        let mut out = ScalarField::zeros(self.grid);
        self.inverse_into(&acc, &mut out.data);
        out
    }

    /// Row-wise divergence of a tensor field: `(div T)_i = d_j T_ij`.
    pub fn divergence_tensor(&mut self, t: &TensorField) -> VectorField {
        let mut out = VectorField::zeros(self.grid);
        let mut acc = self.zero_spec();
        let mut s = self.zero_spec();
        let mut d = self.zero_spec();
        for i in 0..3 {
            acc.iter_mut().for_each(|v| *v = Complex64::default());
            for j in 0..3 {
                self.forward_into(t.comp(i, j), &mut s);
                self.deriv_into(&s, j, &mut d);
                for (a, b) in acc.iter_mut().zip(&d) {
                    *a += b;
                }
            }
            self.inverse_into(&acc, &mut out.comps[i]);
        }
        out
    }

    /// Curl of each row of a tensor field; output row `i` is `curl T_i`.
    pub fn curl_rows(&mut self, t: &TensorField) -> TensorField {
        let mut out = TensorField::zeros(self.grid);
        let mut row_specs = [self.zero_spec(), self.zero_spec(), self.zero_spec()];
        let mut d1 = self.zero_spec();
        let mut d2 = self.zero_spec();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = std::mem::take(&mut row_specs[j]);
                self.forward_into(t.comp(i, j), &mut s);
                row_specs[j] = s;
            }
            // (curl w)_c = eps_{cab} d_a w_b
            for (c, (a, b)) in [(1usize, 2usize), (2, 0), (0, 1)].into_iter().enumerate() {
                self.deriv_into(&row_specs[b], a, &mut d1);
                self.deriv_into(&row_specs[a], b, &mut d2);
                for (p, m) in d1.iter_mut().zip(&d2) {
                    *p -= m;
                }
                self.inverse_into(&d1, out.comp_mut(i, c));
            }
        }
        out
    }

    /// Per-mode symbol `mu |k|^2 I + (mu+lambda) k k^T` applied
    /// or inverted (zero mode mapped to zero in both directions).
    fn lame_multiplier(
        &mut self,
        w: &VectorField,
        mu: f64,
        lambda: f64,
        invert: bool,
    ) -> Result<VectorField> {
        check_ellipticity(mu, lambda)?;
        let mut sx = self.forward(&w.comps[0]);
        let mut sy = self.forward(&w.comps[1]);
        let mut sz = self.forward(&w.comps[2]);
        let (hx, ny, nz) = (self.hx, self.grid.ny, self.grid.nz);
        let ml = mu + lambda;
        let two_mu_l = 2.0 * mu + lambda;
        let mut idx = 0;
        for iz in 0..nz {
            let kz = self.k_full[2][iz];
            for iy in 0..ny {
                let ky = self.k_full[1][iy];
                for ik in 0..hx {
                    let kx = self.k_full[0][ik];
                    let k2 = kx * kx + ky * ky + kz * kz;
                    let (ux, uy, uz) = (sx[idx], sy[idx], sz[idx]);
                    if k2 == 0.0 {
                        // apply: the symbol annihilates constants;
                        // invert: the zero mode is defined as zero
                        sx[idx] = Complex64::default();
                        sy[idx] = Complex64::default();
                        sz[idx] = Complex64::default();
                    } else {
                        let kdotu = ux * kx + uy * ky + uz * kz;
                        if invert {
                            let a = 1.0 / (mu * k2);
                            let b = ml / (two_mu_l * k2);
                            sx[idx] = a * (ux - b * kdotu * kx);
                            sy[idx] = a * (uy - b * kdotu * ky);
                            sz[idx] = a * (uz - b * kdotu * kz);
                        } else {
                            let a = mu * k2;
                            sx[idx] = a * ux + ml * kdotu * kx;
                            sy[idx] = a * uy + ml * kdotu * ky;
                            sz[idx] = a * uz + ml * kdotu * kz;
                        }
                    }
                    idx += 1;
                }
            }
        }
        let mut out = VectorField::zeros(self.grid);
        self.inverse_into(&sx, &mut out.comps[0]);
        self.inverse_into(&sy, &mut out.comps[1]);
        self.inverse_into(&sz, &mut out.comps[2]);
        Ok(out)
    }

    /// Apply the Lame operator `-mu lap w - (mu+lambda) grad div w`.
    pub fn lame_apply(&mut self, w: &VectorField, mu: f64, lambda: f64) -> Result<VectorField> {
        self.lame_multiplier(w, mu, lambda, false)
    }

    /// Invert the Lame operator mode by mode; the mean of the output is zero.
    pub fn lame_solve(&mut self, w: &VectorField, mu: f64, lambda: f64) -> Result<VectorField> {
        self.lame_multiplier(w, mu, lambda, true)
    }
}
