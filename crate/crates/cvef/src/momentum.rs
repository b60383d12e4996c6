//! Momentum right-hand side assembly and the theta-implicit parabolic step
//! of the constant-coefficient viscous operator.
//!
//! The implicit part uses a constant reference density `rho_bar`; variable
//! density enters through the fixed-point correction `(rho_bar - rho) du/dt`
//! supplied by the driver. Each Fourier mode solves a 3x3 symmetric
//! positive-definite system in closed form.

use crate::error::{CvefError, Result};
use crate::field::{ScalarField, TensorField, VectorField};
use crate::spectral::{Spec, SpectralWorkspace};
use crate::state::{FlowState, PhysParams};

/// How the reference density of the implicit solve is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityLagging {
    /// `rho_bar` is the mean of the density at the start of the step.
    FreezeRho,
    /// `rho_bar` is the mean of the current density iterate.
    RhoWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumOptions {
    /// Implicitness weight for the viscous term, in `[1/2, 1]`.
    pub theta: f64,
    pub density_lagging: DensityLagging,
    /// Test hook: drop the elastic stress from the assembled force.
    pub(crate) skip_elastic: bool,
}

impl MomentumOptions {
    pub fn new(theta: f64) -> Result<Self> {
        let o = MomentumOptions {
            theta,
            density_lagging: DensityLagging::FreezeRho,
            skip_elastic: false,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(CvefError::InvalidParams(format!(
                "momentum.theta: {} must lie in [0.5, 1]",
                self.theta
            )));
        }
        Ok(())
    }
}

impl Default for MomentumOptions {
    fn default() -> Self {
        MomentumOptions {
            theta: 1.0,
            density_lagging: DensityLagging::FreezeRho,
            skip_elastic: false,
        }
    }
}

/// Assembled momentum force with its contributions kept separate:
/// `f = convective + pressure_grad + elastic_div` where
/// `convective = -rho (u.grad) u`, `pressure_grad = -nu^-2 grad P(rho)` and
/// `elastic_div = nu^-2 div(rho (I+E)(I+E)^T)`.
#[derive(Debug, Clone)]
pub struct MomentumRhs {
    pub f: VectorField,
    pub convective: VectorField,
    pub pressure_grad: VectorField,
    pub elastic_div: VectorField,
}

/// Assemble the momentum right-hand side from a state.
pub fn assemble_rhs(
    ws: &mut SpectralWorkspace,
    state: &FlowState,
    params: &PhysParams,
) -> Result<MomentumRhs> {
    assemble_rhs_opts(ws, state, params, &MomentumOptions::default())
}

pub(crate) fn assemble_rhs_opts(
    ws: &mut SpectralWorkspace,
    state: &FlowState,
    params: &PhysParams,
    opts: &MomentumOptions,
) -> Result<MomentumRhs> {
    let grad_u = ws.jacobian(&state.u);
    assemble_rhs_with_grad(ws, state, &grad_u, params, opts)
}

/// Hot-path assembly with the velocity jacobian already in hand.
pub(crate) fn assemble_rhs_with_grad(
    ws: &mut SpectralWorkspace,
    state: &FlowState,
    grad_u: &TensorField,
    params: &PhysParams,
    opts: &MomentumOptions,
) -> Result<MomentumRhs> {
    let g = state.grid();
    let n = g.len();
    let rho = &state.rho;
    let min = rho.min();
    if !(min > 0.0) {
        return Err(CvefError::NonPositiveDensity { min });
    }
    let w = params.stress_weight();

    // convective: -rho (grad u . u), with (grad u)_ij = d u_i / d x_j
    let mut convective = VectorField::zeros(g);
    for i in 0..3 {
        let gi = [grad_u.comp(i, 0), grad_u.comp(i, 1), grad_u.comp(i, 2)];
        let out = &mut convective.comps[i];
        for p in 0..n {
            out[p] = -rho.data[p]
                * (gi[0][p] * state.u.comps[0][p]
                    + gi[1][p] * state.u.comps[1][p]
                    + gi[2][p] * state.u.comps[2][p]);
        }
    }

    // pressure: -nu^-2 grad(P(rho) - P(1)); subtracting the equilibrium
    // pressure makes the term vanish identically at rho = 1
    let mut pdev = ScalarField::zeros(g);
    for p in 0..n {
        pdev.data[p] = rho.data[p].powf(params.gamma) - 1.0;
    }
    let mut pspec = ws.forward(&pdev.data);
    ws.apply_mask(&mut pspec);
    let mut pressure_grad = ws.gradient_of_spec(&pspec);
    pressure_grad.scale(-w);

    // elastic: nu^-2 div(rho F F^T - I), again shifted by a constant
    let mut elastic_div = VectorField::zeros(g);
    if !opts.skip_elastic {
        let mut t = TensorField::zeros(g);
        for i in 0..3 {
            for j in 0..3 {
                let out = t.comp_mut(i, j);
                for p in 0..n {
                    let mut s = 0.0;
                    for k in 0..3 {
                        let fik = state.e.comp(i, k)[p] + if i == k { 1.0 } else { 0.0 };
                        let fjk = state.e.comp(j, k)[p] + if j == k { 1.0 } else { 0.0 };
                        s += fik * fjk;
                    }
                    out[p] = rho.data[p] * s - if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        let mut spec = ws.zero_spec();
        let mut dspec = ws.zero_spec();
        let mut acc = ws.zero_spec();
        for i in 0..3 {
            acc.iter_mut()
                .for_each(|v| *v = rustfft::num_complex::Complex64::default());
            for j in 0..3 {
                ws.forward_into(t.comp(i, j), &mut spec);
                ws.apply_mask(&mut spec);
                ws.deriv_into(&spec, j, &mut dspec);
                for (a, b) in acc.iter_mut().zip(&dspec) {
                    *a += b;
                }
            }
            ws.inverse_into(&acc, &mut elastic_div.comps[i]);
        }
        elastic_div.scale(w);
    }

    let mut f = convective.clone();
    f.axpy(1.0, &pressure_grad);
    f.axpy(1.0, &elastic_div);
    Ok(MomentumRhs {
        f,
        convective,
        pressure_grad,
        elastic_div,
    })
}

/// Output of the theta-implicit velocity step: the new velocity and its
/// spectrum (reused by the fixed-point driver).
pub struct VelocityStep {
    pub u: VectorField,
    pub spec: [Spec; 3],
}

/// One theta-implicit step: per Fourier mode
/// `(rho_bar/dt I + theta A(k)) u' = (rho_bar/dt I - (1-theta) A(k)) u + f`
/// with `A(k) = mu |k|^2 I + (mu+lambda) k k^T`.
pub fn advance_velocity(
    ws: &mut SpectralWorkspace,
    u: &VectorField,
    f: &VectorField,
    rho_bar: f64,
    dt: f64,
    params: &PhysParams,
    opts: &MomentumOptions,
) -> Result<VectorField> {
    let u_spec = [
        ws.forward(&u.comps[0]),
        ws.forward(&u.comps[1]),
        ws.forward(&u.comps[2]),
    ];
    Ok(advance_velocity_spec(ws, &u_spec, f, rho_bar, dt, params, opts)?.u)
}

pub(crate) fn advance_velocity_spec(
    ws: &mut SpectralWorkspace,
    u_spec: &[Spec; 3],
    f: &VectorField,
    rho_bar: f64,
    dt: f64,
    params: &PhysParams,
    opts: &MomentumOptions,
) -> Result<VelocityStep> {
    params.validate()?;
    opts.validate()?;
    if !(dt > 0.0) {
        return Err(CvefError::InvalidParams(format!(
            "time.dt: {dt} must be > 0"
        )));
    }
    if !(rho_bar > 0.0) {
        return Err(CvefError::NonPositiveDensity { min: rho_bar });
    }
    let (mu, lambda, theta) = (params.mu, params.lambda, opts.theta);
    let mut fx = ws.forward(&f.comps[0]);
    let mut fy = ws.forward(&f.comps[1]);
    let mut fz = ws.forward(&f.comps[2]);
    ws.apply_mask(&mut fx);
    ws.apply_mask(&mut fy);
    ws.apply_mask(&mut fz);

    let grid = ws.grid();
    let (hx, ny, nz) = (ws.hx(), grid.ny, grid.nz);
    let kxs = ws.k_full_axis(0).to_vec();
    let kys = ws.k_full_axis(1).to_vec();
    let kzs = ws.k_full_axis(2).to_vec();
    let s = rho_bar / dt;
    let ml = mu + lambda;
    let mut idx = 0;
    for iz in 0..nz {
        let kz = kzs[iz];
        for iy in 0..ny {
            let ky = kys[iy];
            for ik in 0..hx {
                let kx = kxs[ik];
                let k2 = kx * kx + ky * ky + kz * kz;
                let (ux, uy, uz) = (u_spec[0][idx], u_spec[1][idx], u_spec[2][idx]);
                let (gx, gy, gz) = (fx[idx], fy[idx], fz[idx]);
                if k2 == 0.0 {
                    // zero mode: A = 0, so u' = u + f dt / rho_bar
                    let c = dt / rho_bar;
                    fx[idx] = ux + c * gx;
                    fy[idx] = uy + c * gy;
                    fz[idx] = uz + c * gz;
                } else {
                    // rhs = (s I - (1-theta) A) u + f
                    let kdotu = ux * kx + uy * ky + uz * kz;
                    let a1 = (1.0 - theta) * mu * k2;
                    let a2 = (1.0 - theta) * ml;
                    let rx = (s - a1) * ux - a2 * kdotu * kx + gx;
                    let ry = (s - a1) * uy - a2 * kdotu * ky + gy;
                    let rz = (s - a1) * uz - a2 * kdotu * kz + gz;
                    // invert M = alpha I + beta k k^T
                    let alpha = s + theta * mu * k2;
                    let beta = theta * ml;
                    let kdotr = rx * kx + ry * ky + rz * kz;
                    let corr = beta / (alpha * (alpha + beta * k2));
                    let ia = 1.0 / alpha;
                    fx[idx] = ia * rx - corr * kdotr * kx;
                    fy[idx] = ia * ry - corr * kdotr * ky;
                    fz[idx] = ia * rz - corr * kdotr * kz;
                }
                idx += 1;
            }
        }
    }
    let mut u = VectorField::zeros(grid);
    ws.inverse_into(&fx, &mut u.comps[0]);
    ws.inverse_into(&fy, &mut u.comps[1]);
    ws.inverse_into(&fz, &mut u.comps[2]);
    Ok(VelocityStep {
        u,
        spec: [fx, fy, fz],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    const PI: f64 = std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::cubic(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn rhs_is_exactly_zero_at_equilibrium() {
        let g = grid(16);
        let mut ws = SpectralWorkspace::new(g);
        let state = FlowState::equilibrium(g);
        let rhs = assemble_rhs(&mut ws, &state, &PhysParams::default()).unwrap();
        assert_eq!(rhs.f.max_abs(), 0.0);
        assert_eq!(rhs.convective.max_abs(), 0.0);
        assert_eq!(rhs.pressure_grad.max_abs(), 0.0);
        assert_eq!(rhs.elastic_div.max_abs(), 0.0);
    }

    #[test]
    fn rhs_elastic_term_matches_1d_expansion() {
        // rho = 1, u = 0, E11 = eps sin x: (div rho F F^T)_1 = 2 eps cos x (1 + eps sin x)
        let g = grid(16);
        let mut ws = SpectralWorkspace::new(g);
        let eps = 0.01;
        let mut state = FlowState::equilibrium(g);
        for (ix, iy, iz, idx) in g.iter_indices() {
            let [x, _, _] = g.coords(ix, iy, iz);
            let _ = (iy, iz);
            state.e.comp_mut(0, 0)[idx] = eps * x.sin();
        }
        let rhs = assemble_rhs(&mut ws, &state, &PhysParams::default()).unwrap();
        for (ix, iy, iz, idx) in g.iter_indices() {
            let [x, _, _] = g.coords(ix, iy, iz);
            let expect = 2.0 * eps * x.cos() * (1.0 + eps * x.sin());
            assert!(
                (rhs.elastic_div.comps[0][idx] - expect).abs() < 1e-12,
                "at {x}: {} vs {expect}",
                rhs.elastic_div.comps[0][idx]
            );
            assert!(rhs.elastic_div.comps[1][idx].abs() < 1e-12);
        }
    }

    #[test]
    fn rhs_matches_fd_assembly_on_small_state() {
        // cross-check the full assembly against 2nd-order central differences
        let g = grid(8);
        let mut ws = SpectralWorkspace::new(g);
        let amp = 1e-3;
        let mut state = FlowState::equilibrium(g);
        for (ix, iy, iz, idx) in g.iter_indices() {
            let [x, y, z] = g.coords(ix, iy, iz);
            state.rho.data[idx] = 1.0 + amp * (x + y).sin();
            state.u.comps[0][idx] = amp * y.sin();
            state.u.comps[1][idx] = amp * (x - z).cos();
            state.e.comp_mut(0, 1)[idx] = amp * z.sin();
            state.e.comp_mut(2, 2)[idx] = amp * x.cos();
        }
        let params = PhysParams::default();
        let rhs = assemble_rhs(&mut ws, &state, &params).unwrap();

        // finite-difference oracle, written against the same definitions
        let [hx, hy, hz] = g.spacing();
        let hs = [hx, hy, hz];
        let shift = |ix: usize, iy: usize, iz: usize, axis: usize, s: i64| -> usize {
            let dims = [g.nx, g.ny, g.nz];
            let mut c = [ix, iy, iz];
            c[axis] = ((c[axis] as i64 + s).rem_euclid(dims[axis] as i64)) as usize;
            g.idx(c[0], c[1], c[2])
        };
        let deriv = |data: &[f64], ix: usize, iy: usize, iz: usize, axis: usize| -> f64 {
            (data[shift(ix, iy, iz, axis, 1)] - data[shift(ix, iy, iz, axis, -1)])
                / (2.0 * hs[axis])
        };
        let mut t = vec![vec![0.0; g.len()]; 9];
        let mut press = vec![0.0; g.len()];
        for idx in 0..g.len() {
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for k in 0..3 {
                        let fik = state.e.comp(i, k)[idx] + if i == k { 1.0 } else { 0.0 };
                        let fjk = state.e.comp(j, k)[idx] + if j == k { 1.0 } else { 0.0 };
                        s += fik * fjk;
                    }
                    t[3 * i + j][idx] = state.rho.data[idx] * s;
                }
            }
            press[idx] = state.rho.data[idx].powf(params.gamma);
        }
        let mut worst = 0.0f64;
        for (ix, iy, iz, idx) in g.iter_indices() {
            for i in 0..3 {
                let mut conv = 0.0;
                for k in 0..3 {
                    conv += state.u.comps[k][idx] * deriv(&state.u.comps[i], ix, iy, iz, k);
                }
                conv *= -state.rho.data[idx];
                let press_g = -deriv(&press, ix, iy, iz, i);
                let mut elas = 0.0;
                for j in 0..3 {
                    elas += deriv(&t[3 * i + j], ix, iy, iz, j);
                }
                let fd = conv + press_g + elas;
                worst = worst.max((rhs.f.comps[i][idx] - fd).abs());
            }
        }
        // FD truncation ~ h^2/6 * |third derivatives| ~ h^2/6 * amp * k^3
        let h2 = hx * hx;
        let bound = h2 / 6.0 * amp * 30.0;
        assert!(worst <= bound, "deviation {worst:.3e} vs bound {bound:.3e}");
    }

    #[test]
    fn velocity_single_mode_decay_factor() {
        let g = grid(16);
        let mut ws = SpectralWorkspace::new(g);
        let u = VectorField::from_fn(g, |x, _, _| [x.sin(), 0.0, 0.0]);
        let f = VectorField::zeros(g);
        let params = PhysParams::default();
        let opts = MomentumOptions::default(); // theta = 1
        let dt = 0.1;
        let out = advance_velocity(&mut ws, &u, &f, 1.0, dt, &params, &opts).unwrap();
        // longitudinal mode e1: (1/dt) / (1/dt + (2 mu + lambda)) = 1/1.2
        for (ix, iy, iz, idx) in g.iter_indices() {
            let [x, _, _] = g.coords(ix, iy, iz);
            assert!(
                (out.comps[0][idx] - x.sin() / 1.2).abs() < 1e-12,
                "{} vs {}",
                out.comps[0][idx],
                x.sin() / 1.2
            );
        }
    }

    #[test]
    fn velocity_constant_mode_untouched_and_mean_update_exact() {
        let g = grid(8);
        let mut ws = SpectralWorkspace::new(g);
        let u = VectorField::from_fn(g, |_, _, _| [0.3, -0.1, 0.7]);
        let f = VectorField::zeros(g);
        let params = PhysParams::default();
        let out =
            advance_velocity(&mut ws, &u, &f, 1.0, 0.05, &params, &MomentumOptions::default())
                .unwrap();
        for c in 0..3 {
            let expect = [0.3, -0.1, 0.7][c];
            for v in &out.comps[c] {
                assert!((v - expect).abs() < 1e-13);
            }
        }
        // zero-mode update is mean(f) dt / rho_bar exactly
        let f = VectorField::from_fn(g, |_, _, _| [2.0, 0.0, -4.0]);
        let rho_bar = 0.8;
        let dt = 0.05;
        let out = advance_velocity(&mut ws, &u, &f, rho_bar, dt, &params, &MomentumOptions::default())
            .unwrap();
        let m = out.mean();
        assert!((m[0] - (0.3 + 2.0 * dt / rho_bar)).abs() < 1e-13);
        assert!((m[2] - (0.7 - 4.0 * dt / rho_bar)).abs() < 1e-13);
    }

    #[test]
    fn velocity_heat_decay_rate_on_solenoidal_mode() {
        // u = sin(x) e2 is solenoidal with |k| = 1: energy decays at
        // exp(-2 mu t) in the linear regime
        let g = grid(16);
        let mut ws = SpectralWorkspace::new(g);
        let mut u = VectorField::from_fn(g, |x, _, _| [0.0, x.sin(), 0.0]);
        let f = VectorField::zeros(g);
        let params = PhysParams::default();
        let opts = MomentumOptions::new(0.5).unwrap();
        let dt = 1e-3;
        let steps = 100;
        let e0 = u.norm_l2().powi(2);
        let spec0 = [
            ws.forward(&u.comps[0]),
            ws.forward(&u.comps[1]),
            ws.forward(&u.comps[2]),
        ];
        let mut spec = spec0;
        for _ in 0..steps {
            let step = advance_velocity_spec(&mut ws, &spec, &f, 1.0, dt, &params, &opts).unwrap();
            spec = step.spec;
            u = step.u;
        }
        let e1 = u.norm_l2().powi(2);
        let t = dt * steps as f64;
        let exact = e0 * (-2.0 * params.mu * t).exp();
        assert!(
            ((e1 - exact) / exact).abs() < 0.01,
            "decay {} vs exact {}",
            e1,
            exact
        );
    }

    #[test]
    fn velocity_l2_nonexpansive_for_theta_geq_half() {
        let g = grid(8);
        let mut ws = SpectralWorkspace::new(g);
        let u = VectorField::from_fn(g, |x, y, z| {
            [
                (x + y).sin() + 0.3 * (2.0 * z).cos(),
                (y - z).cos(),
                x.sin() * y.cos(),
            ]
        });
        let f = VectorField::zeros(g);
        let params = PhysParams {
            mu: 0.7,
            lambda: 0.2,
            ..Default::default()
        };
        for theta in [0.5, 0.75, 1.0] {
            for dt in [1e-3, 0.1, 10.0, 1e4] {
                let opts = MomentumOptions::new(theta).unwrap();
                let out = advance_velocity(&mut ws, &u, &f, 1.0, dt, &params, &opts).unwrap();
                assert!(
                    out.norm_l2() <= u.norm_l2() * (1.0 + 1e-12),
                    "theta {theta} dt {dt}"
                );
            }
        }
    }

    #[test]
    fn equilibrium_velocity_step_is_identity() {
        let g = grid(8);
        let mut ws = SpectralWorkspace::new(g);
        let u = VectorField::zeros(g);
        let f = VectorField::zeros(g);
        let out = advance_velocity(
            &mut ws,
            &u,
            &f,
            1.0,
            0.1,
            &PhysParams::default(),
            &MomentumOptions::default(),
        )
        .unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn per_mode_matrices_positive_definite() {
        // eigenvalues rho_bar/dt + theta mu |k|^2 and rho_bar/dt + theta (2mu+lambda)|k|^2
        let params = PhysParams {
            mu: 0.4,
            lambda: -0.2,
            ..Default::default()
        };
        let (s, theta) = (10.0, 0.5);
        for k2 in [1.0, 2.0, 9.0, 100.0, 768.0] {
            let lam1 = s + theta * params.mu * k2;
            let lam2 = s + theta * (2.0 * params.mu + params.lambda) * k2;
            assert!(lam1 > 0.0 && lam2 > 0.0);
        }
    }

    #[test]
    fn options_validation() {
        assert!(MomentumOptions::new(0.3).is_err());
        assert!(MomentumOptions::new(1.1).is_err());
        assert!(MomentumOptions::new(0.5).is_ok());
        let g = grid(8);
        let mut ws = SpectralWorkspace::new(g);
        let mut state = FlowState::equilibrium(g);
        state.rho.data[0] = -1.0;
        assert!(matches!(
            assemble_rhs(&mut ws, &state, &PhysParams::default()),
            Err(CvefError::NonPositiveDensity { .. })
        ));
    }
}
