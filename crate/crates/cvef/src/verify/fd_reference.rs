//! Brute-force reference solver: one explicit-Euler step of the fully
//! coupled system with second-order central differences for every
//! derivative and no dealiasing.
//!
//! This module is deliberately independent of the spectral machinery: it
//! imports only the field containers and error types, never the transform
//! or operator code, so agreement between the two solvers is evidence and
//! not tautology.

use crate::error::{CvefError, Result};
use crate::field::{ScalarField, TensorField, VectorField};
use crate::grid::Grid;
use crate::state::{FlowState, PhysParams};

/// Resolution and stepping limits of the reference solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Points per axis; capped to keep the brute-force cost bounded.
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n > 16 {
            return Err(CvefError::InvalidParams(format!(
                "oracle n = {} exceeds the cost guard (16 per axis)",
                self.n
            )));
        }
        if !(self.dt > 0.0) {
            return Err(CvefError::InvalidParams(format!(
                "oracle dt = {} must be > 0",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Periodic index shift along one axis.
#[inline]
fn shift(g: Grid, ix: usize, iy: usize, iz: usize, axis: usize, s: i64) -> usize {
    let dims = [g.nx, g.ny, g.nz];
    let mut c = [ix, iy, iz];
    c[axis] = ((c[axis] as i64 + s).rem_euclid(dims[axis] as i64)) as usize;
    g.idx(c[0], c[1], c[2])
}

/// Second-order central first derivative.
#[inline]
fn d1(data: &[f64], g: Grid, ix: usize, iy: usize, iz: usize, axis: usize, h: f64) -> f64 {
    (data[shift(g, ix, iy, iz, axis, 1)] - data[shift(g, ix, iy, iz, axis, -1)]) / (2.0 * h)
}

/// Second-order central second derivative along one axis.
#[inline]
fn d2(data: &[f64], g: Grid, ix: usize, iy: usize, iz: usize, axis: usize, h: f64) -> f64 {
    let c = data[g.idx(ix, iy, iz)];
    (data[shift(g, ix, iy, iz, axis, 1)] - 2.0 * c + data[shift(g, ix, iy, iz, axis, -1)])
        / (h * h)
}

/// One explicit-Euler step of the coupled system.
pub fn fd_reference_step(
    state: &FlowState,
    dt: f64,
    params: &PhysParams,
    cfg: &OracleConfig,
) -> Result<FlowState> {
    cfg.validate()?;
    params.validate()?;
    let g = state.grid();
    let hs = g.spacing();
    let min = state.rho.min();
    if !(min > 0.0) {
        return Err(CvefError::NonPositiveDensity { min });
    }
    let max_speed = state.u.max_norm();
    let cfl = max_speed * dt / g.h_min();
    if cfl > 0.5 {
        return Err(CvefError::CflViolation { cfl, limit: 0.5 });
    }

    let n = g.len();
    let w = params.stress_weight();
    let mut rho_new = ScalarField::zeros(g);
    let mut u_new = VectorField::zeros(g);
    let mut e_new = TensorField::zeros(g);

    // pointwise products that sit under derivatives
    let mut flux = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut press = vec![0.0; n];
    let mut stress = vec![vec![0.0; n]; 9];
    for p in 0..n {
        let r = state.rho.data[p];
        for c in 0..3 {
            flux[c][p] = r * state.u.comps[c][p];
        }
        press[p] = r.powf(params.gamma);
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    let fik = state.e.comp(i, k)[p] + if i == k { 1.0 } else { 0.0 };
                    let fjk = state.e.comp(j, k)[p] + if j == k { 1.0 } else { 0.0 };
                    s += fik * fjk;
                }
                stress[3 * i + j][p] = r * s;
            }
        }
    }
    let mut divu = vec![0.0; n];
    for (ix, iy, iz, idx) in g.iter_indices() {
        divu[idx] = d1(&state.u.comps[0], g, ix, iy, iz, 0, hs[0])
            + d1(&state.u.comps[1], g, ix, iy, iz, 1, hs[1])
            + d1(&state.u.comps[2], g, ix, iy, iz, 2, hs[2]);
    }

    for (ix, iy, iz, idx) in g.iter_indices() {
        let r = state.rho.data[idx];

        // continuity, conservative flux form
        let divflux = d1(&flux[0], g, ix, iy, iz, 0, hs[0])
            + d1(&flux[1], g, ix, iy, iz, 1, hs[1])
            + d1(&flux[2], g, ix, iy, iz, 2, hs[2]);
        rho_new.data[idx] = r - dt * divflux;

        // momentum, nonconservative form divided by rho
        for i in 0..3 {
            let mut conv = 0.0;
            for k in 0..3 {
                conv += state.u.comps[k][idx] * d1(&state.u.comps[i], g, ix, iy, iz, k, hs[k]);
            }
            let mut lap = 0.0;
            for k in 0..3 {
                lap += d2(&state.u.comps[i], g, ix, iy, iz, k, hs[k]);
            }
            let grad_div = d1(&divu, g, ix, iy, iz, i, hs[i]);
            let mut div_stress = 0.0;
            for j in 0..3 {
                div_stress += d1(&stress[3 * i + j], g, ix, iy, iz, j, hs[j]);
            }
            let grad_p = d1(&press, g, ix, iy, iz, i, hs[i]);
            let f = -r * conv - w * grad_p
                + w * div_stress
                + params.mu * lap
                + (params.mu + params.lambda) * grad_div;
            u_new.comps[i][idx] = state.u.comps[i][idx] + dt * f / r;
        }

        // deformation transport-reaction
        for i in 0..3 {
            for j in 0..3 {
                let mut adv = 0.0;
                for k in 0..3 {
                    adv +=
                        state.u.comps[k][idx] * d1(state.e.comp(i, j), g, ix, iy, iz, k, hs[k]);
                }
                let mut reac = 0.0;
                for k in 0..3 {
                    let guik = d1(&state.u.comps[i], g, ix, iy, iz, k, hs[k]);
                    reac += guik * state.e.comp(k, j)[idx];
                }
                let guij = d1(&state.u.comps[i], g, ix, iy, iz, j, hs[j]);
                e_new.comp_mut(i, j)[idx] = state.e.comp(i, j)[idx] + dt * (-adv + reac + guij);
            }
        }
    }

    let min = rho_new.min();
    if !(min > 0.0) {
        return Err(CvefError::PositivityLost { min_rho: min });
    }
    Ok(FlowState {
        rho: rho_new,
        u: u_new,
        e: e_new,
        t: state.t + dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PI: f64 = std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::cubic(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn equilibrium_is_unchanged() {
        let g = grid(8);
        let st = FlowState::equilibrium(g);
        let cfg = OracleConfig {
            n: 8,
            dt: 1e-4,
            steps: 1,
        };
        let out = fd_reference_step(&st, 1e-4, &PhysParams::default(), &cfg).unwrap();
        let mut worst = 0.0f64;
        for p in 0..g.len() {
            worst = worst.max((out.rho.data[p] - 1.0).abs());
            for c in 0..3 {
                worst = worst.max(out.u.comps[c][p].abs());
            }
            for c in 0..9 {
                worst = worst.max(out.e.comps[c][p].abs());
            }
        }
        assert!(worst < 1e-14, "equilibrium drift {worst:.3e}");
    }

    #[test]
    fn advected_mode_translates_within_scheme_error() {
        let g = grid(8);
        let mut st = FlowState::equilibrium(g);
        let amp = 1e-3;
        for (ix, iy, iz, idx) in g.iter_indices() {
            let [x, _, _] = g.coords(ix, iy, iz);
            let _ = (iy, iz);
            st.rho.data[idx] = 1.0 + amp * x.sin();
            st.u.comps[0][idx] = 0.2;
        }
        let dt = 1e-3;
        let steps = 20;
        let cfg = OracleConfig { n: 8, dt, steps };
        let mut cur = st.clone();
        for _ in 0..steps {
            cur = fd_reference_step(&cur, dt, &PhysParams::default(), &cfg).unwrap();
        }
        let t = dt * steps as f64;
        let mut worst = 0.0f64;
        for (ix, iy, iz, idx) in g.iter_indices() {
            let [x, _, _] = g.coords(ix, iy, iz);
            let _ = (iy, iz);
            let exact = 1.0 + amp * (x - 0.2 * t).sin();
            worst = worst.max((cur.rho.data[idx] - exact).abs());
        }
        // O(h^2) spatial + O(dt) temporal, plus pressure feedback over t
        let [h, _, _] = g.spacing();
        let bound = amp * (h * h / 6.0 + dt) + amp * amp + amp * t * t;
        assert!(worst < 5.0 * bound, "err {worst:.3e} vs bound {bound:.3e}");
    }

    #[test]
    fn cost_guard_rejects_large_grids() {
        let cfg = OracleConfig {
            n: 32,
            dt: 1e-4,
            steps: 1,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn module_is_independent_of_the_spectral_kernel() {
        // build-level check: this file may only import the field containers,
        // the grid, the error and state types
        let src = include_str!("fd_reference.rs");
        for line in src.lines().filter(|l| l.trim_start().starts_with("use ")) {
            let ok = [
                "crate::error",
                "crate::field",
                "crate::grid",
                "crate::state",
                "super::*",
            ]
            .iter()
            .any(|p| line.contains(p));
            assert!(ok, "unexpected import in fd_reference: {line}");
        }
    }
}
