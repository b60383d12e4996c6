//! Transport of the density and the deformation tensor against a frozen
//! velocity field, plus the log-density gradient `sigma = grad(ln rho)`
//! and its evolution-residual check.
//!
//! The default scheme advances both equations with RK4 in time and spectral
//! derivatives in space; the continuity equation is stepped in conservative
//! form, so the discrete mass integral is preserved to roundoff. A
//! semi-Lagrangian RK2 scheme is available as a robustness fallback for
//! rougher data (it trades strict conservation and spectral constraint
//! fidelity for unconditional advective stability).

use rustfft::num_complex::Complex64;

use crate::error::{CvefError, Result};
use crate::field::{ScalarField, TensorField, VectorField};
use crate::spectral::{Spec, SpectralWorkspace};

/// Time-integration scheme for the transport solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    SpectralRk4,
    SemiLagrangianRk2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportOptions {
    pub scheme: Scheme,
    pub dealias: bool,
    /// Advective bound: `max|u| dt / h <= cfl_limit`.
    pub cfl_limit: f64,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            scheme: Scheme::SpectralRk4,
            dealias: true,
            cfl_limit: 0.5,
        }
    }
}

/// The log-density gradient `sigma = grad(ln rho)`.
#[derive(Debug, Clone)]
pub struct SigmaField {
    pub sigma: VectorField,
}

/// A velocity field frozen over one transport interval, with its spectral
/// gradient precomputed once.
pub struct FrozenVelocity {
    pub u: VectorField,
    /// `grad.comp(i,j) = d u_i / d x_j`.
    pub grad: TensorField,
    pub max_speed: f64,
    pub(crate) is_zero: bool,
}

impl FrozenVelocity {
    pub fn compute(ws: &mut SpectralWorkspace, u: &VectorField) -> Self {
        let max_speed = u.max_norm();
        if max_speed == 0.0 {
            return FrozenVelocity {
                u: u.clone(),
                grad: TensorField::zeros(u.grid),
                max_speed: 0.0,
                is_zero: true,
            };
        }
        let grad = ws.jacobian(u);
        FrozenVelocity {
            u: u.clone(),
            grad,
            max_speed,
            is_zero: false,
        }
    }

    /// Assemble from parts already in hand (velocity spectra from the
    /// momentum solve, or a directly injected gradient in tests).
    pub(crate) fn from_parts(u: VectorField, grad: TensorField) -> Self {
        let max_speed = u.max_norm();
        let is_zero = max_speed == 0.0 && grad.max_abs() == 0.0;
        FrozenVelocity {
            u,
            grad,
            max_speed,
            is_zero,
        }
    }
}

fn check_cfl(fv: &FrozenVelocity, dt: f64, h: f64, limit: f64) -> Result<()> {
    let cfl = fv.max_speed * dt / h;
    if cfl > limit {
        Err(CvefError::CflViolation { cfl, limit })
    } else {
        Ok(())
    }
}

/// Optional source terms, evaluated at intermediate stage times.
pub type ScalarForcing<'a> = &'a dyn Fn(f64) -> ScalarField;
pub type TensorForcing<'a> = &'a dyn Fn(f64) -> TensorField;

// ---------------------------------------------------------------- density

/// One step of the conservative continuity equation; the velocity is frozen
/// over `[t, t+dt]`.
pub fn advance_density(
    ws: &mut SpectralWorkspace,
    rho: &ScalarField,
    u_frozen: &VectorField,
    dt: f64,
    opts: &TransportOptions,
) -> Result<ScalarField> {
    let fv = FrozenVelocity::compute(ws, u_frozen);
    advance_density_frozen(ws, rho, &fv, dt, opts, None, 0.0)
}

/// Hot-path variant taking a precomputed frozen velocity and an optional
/// source term `g(t)` added to the right-hand side.
pub fn advance_density_frozen(
    ws: &mut SpectralWorkspace,
    rho: &ScalarField,
    fv: &FrozenVelocity,
    dt: f64,
    opts: &TransportOptions,
    forcing: Option<ScalarForcing>,
    t0: f64,
) -> Result<ScalarField> {
    let min = rho.min();
    if !(min > 0.0) {
        return Err(CvefError::NonPositiveDensity { min });
    }
    if !(dt > 0.0) {
        return Err(CvefError::InvalidParams(format!(
            "time.dt: {dt} must be > 0"
        )));
    }
    if fv.is_zero && forcing.is_none() {
        return Ok(rho.clone());
    }
    check_cfl(fv, dt, rho.grid.h_min(), opts.cfl_limit)?;
    let out = match opts.scheme {
        Scheme::SpectralRk4 => density_rk4(ws, rho, fv, dt, opts, forcing, t0),
        Scheme::SemiLagrangianRk2 => density_sl(ws, rho, fv, dt, forcing, t0),
    };
    let min = out.min();
    if !(min > 0.0) {
        return Err(CvefError::PositivityLost { min_rho: min });
    }
    Ok(out)
}

/// `-div(rho u)` with spectral divergence and masked flux, plus forcing.
#[allow(clippy::too_many_arguments)]
fn density_rhs(
    ws: &mut SpectralWorkspace,
    rho: &ScalarField,
    fv: &FrozenVelocity,
    opts: &TransportOptions,
    forcing: Option<ScalarForcing>,
    t: f64,
    flux: &mut Vec<f64>,
    spec: &mut Spec,
    dspec: &mut Spec,
    acc: &mut Spec,
    out: &mut [f64],
) {
    let n = rho.grid.len();
    acc.iter_mut().for_each(|v| *v = Complex64::default());
    for c in 0..3 {
        for i in 0..n {
            flux[i] = rho.data[i] * fv.u.comps[c][i];
        }
        ws.forward_into(flux, spec);
        ws.deriv_into(spec, c, dspec);
        for (a, b) in acc.iter_mut().zip(dspec.iter()) {
            *a += b;
        }
    }
    if opts.dealias {
        ws.apply_mask(acc);
    }
    ws.inverse_into(acc, out);
    for v in out.iter_mut() {
        *v = -*v;
    }
    if let Some(g) = forcing {
        let gf = g(t);
        for (o, s) in out.iter_mut().zip(&gf.data) {
            *o += s;
        }
    }
}

fn density_rk4(
    ws: &mut SpectralWorkspace,
    rho: &ScalarField,
    fv: &FrozenVelocity,
    dt: f64,
    opts: &TransportOptions,
    forcing: Option<ScalarForcing>,
    t0: f64,
) -> ScalarField {
    let g = rho.grid;
    let n = g.len();
    let mut flux = vec![0.0; n];
    let mut spec = ws.zero_spec();
    let mut dspec = ws.zero_spec();
    let mut acc = ws.zero_spec();
    let mut k = vec![0.0; n];
    let mut prev_k = vec![0.0; n];
    let mut stage = ScalarField::zeros(g);
    let mut accum = rho.clone();

    let coeffs = [
        (0.0, 1.0 / 6.0),
        (0.5, 1.0 / 3.0),
        (0.5, 1.0 / 3.0),
        (1.0, 1.0 / 6.0),
    ];
    for (s, (c, w)) in coeffs.iter().enumerate() {
        if s == 0 {
            stage.data.copy_from_slice(&rho.data);
        } else {
            for i in 0..n {
                stage.data[i] = rho.data[i] + c * dt * prev_k[i];
            }
        }
        density_rhs(
            ws,
            &stage,
            fv,
            opts,
            forcing,
            t0 + c * dt,
            &mut flux,
            &mut spec,
            &mut dspec,
            &mut acc,
            &mut k,
        );
        for i in 0..n {
            accum.data[i] += w * dt * k[i];
        }
        std::mem::swap(&mut prev_k, &mut k);
    }
    accum
}

// ------------------------------------------------------------ deformation

/// One step of `E_t + u.grad E = grad(u) E + grad(u)` with frozen velocity.
pub fn advance_deformation(
    ws: &mut SpectralWorkspace,
    e: &TensorField,
    u_frozen: &VectorField,
    dt: f64,
    opts: &TransportOptions,
) -> Result<TensorField> {
    let fv = FrozenVelocity::compute(ws, u_frozen);
    advance_deformation_frozen(ws, e, &fv, dt, opts, None, 0.0)
}

pub fn advance_deformation_frozen(
    ws: &mut SpectralWorkspace,
    e: &TensorField,
    fv: &FrozenVelocity,
    dt: f64,
    opts: &TransportOptions,
    forcing: Option<TensorForcing>,
    t0: f64,
) -> Result<TensorField> {
    if !(dt > 0.0) {
        return Err(CvefError::InvalidParams(format!(
            "time.dt: {dt} must be > 0"
        )));
    }
    if fv.is_zero && forcing.is_none() {
        return Ok(e.clone());
    }
    check_cfl(fv, dt, e.grid.h_min(), opts.cfl_limit)?;
    match opts.scheme {
        Scheme::SpectralRk4 => Ok(deformation_rk4(ws, e, fv, dt, opts, forcing, t0)),
        Scheme::SemiLagrangianRk2 => Ok(deformation_sl(ws, e, fv, dt, forcing, t0)),
    }
}

/// Pointwise stage right-hand side `-u.grad E + grad(u) E + grad(u)`.
pub(crate) fn deformation_rhs_pointwise(
    e: &TensorField,
    grad_e: &[TensorField; 3],
    fv: &FrozenVelocity,
    rhs: &mut TensorField,
) {
    let n = e.grid.len();
    for i in 0..3 {
        for j in 0..3 {
            let cij = 3 * i + j;
            let (u0, u1, u2) = (&fv.u.comps[0], &fv.u.comps[1], &fv.u.comps[2]);
            let (d0, d1, d2) = (
                &grad_e[0].comps[cij],
                &grad_e[1].comps[cij],
                &grad_e[2].comps[cij],
            );
            let (g0, g1, g2) = (fv.grad.comp(i, 0), fv.grad.comp(i, 1), fv.grad.comp(i, 2));
            let (e0, e1, e2) = (e.comp(0, j), e.comp(1, j), e.comp(2, j));
            let gij = fv.grad.comp(i, j);
            let out = &mut rhs.comps[cij];
            for p in 0..n {
                out[p] = -(u0[p] * d0[p] + u1[p] * d1[p] + u2[p] * d2[p])
                    + g0[p] * e0[p]
                    + g1[p] * e1[p]
                    + g2[p] * e2[p]
                    + gij[p];
            }
        }
    }
}

/// Fill the real stage tensor and its gradient from the stage spectra.
fn stage_fields(
    ws: &mut SpectralWorkspace,
    spec: &[Spec; 9],
    deriv_buf: &mut Spec,
    e_out: &mut TensorField,
    grad_out: &mut [TensorField; 3],
    skip_e: bool,
) {
    for c in 0..9 {
        if !skip_e {
            ws.inverse_into(&spec[c], &mut e_out.comps[c]);
        }
        for axis in 0..3 {
            ws.deriv_into(&spec[c], axis, deriv_buf);
            ws.inverse_into(deriv_buf, &mut grad_out[axis].comps[c]);
        }
    }
}

fn deformation_rk4(
    ws: &mut SpectralWorkspace,
    e: &TensorField,
    fv: &FrozenVelocity,
    dt: f64,
    opts: &TransportOptions,
    forcing: Option<TensorForcing>,
    t0: f64,
) -> TensorField {
    let g = e.grid;
    let mut e0_spec: [Spec; 9] = std::array::from_fn(|_| ws.zero_spec());
    for c in 0..9 {
        ws.forward_into(&e.comps[c], &mut e0_spec[c]);
    }
    let mut stage_spec: [Spec; 9] = std::array::from_fn(|_| ws.zero_spec());
    let mut accum: [Spec; 9] = e0_spec.clone();
    let mut deriv_buf = ws.zero_spec();
    let mut e_stage = e.clone();
    let mut grad_e: [TensorField; 3] = std::array::from_fn(|_| TensorField::zeros(g));
    let mut rhs = TensorField::zeros(g);
    let mut rhs_spec = ws.zero_spec();
    let mut prev_rhs: [Spec; 9] = std::array::from_fn(|_| ws.zero_spec());

    let coeffs = [
        (0.0, 1.0 / 6.0),
        (0.5, 1.0 / 3.0),
        (0.5, 1.0 / 3.0),
        (1.0, 1.0 / 6.0),
    ];
    for (s, (c, w)) in coeffs.iter().enumerate() {
        if s == 0 {
            e_stage.comps.clone_from(&e.comps);
            stage_fields(ws, &e0_spec, &mut deriv_buf, &mut e_stage, &mut grad_e, true);
        } else {
            for comp in 0..9 {
                let cdt = c * dt;
                for (dst, (base, k)) in stage_spec[comp]
                    .iter_mut()
                    .zip(e0_spec[comp].iter().zip(&prev_rhs[comp]))
                {
                    *dst = base + cdt * k;
                }
            }
            stage_fields(
                ws,
                &stage_spec,
                &mut deriv_buf,
                &mut e_stage,
                &mut grad_e,
                false,
            );
        }
        deformation_rhs_pointwise(&e_stage, &grad_e, fv, &mut rhs);
        if let Some(gf) = forcing {
            let add = gf(t0 + c * dt);
            rhs.axpy(1.0, &add);
        }
        let wdt = w * dt;
        for comp in 0..9 {
            ws.forward_into(&rhs.comps[comp], &mut rhs_spec);
            if opts.dealias {
                ws.apply_mask(&mut rhs_spec);
            }
            for (a, k) in accum[comp].iter_mut().zip(&rhs_spec) {
                *a += wdt * k;
            }
            std::mem::swap(&mut prev_rhs[comp], &mut rhs_spec);
        }
    }
    let mut out = TensorField::zeros(g);
    for c in 0..9 {
        ws.inverse_into(&accum[c], &mut out.comps[c]);
    }
    out
}

// ---------------------------------------------------- semi-Lagrangian

/// Periodic cubic Lagrange interpolation of a sampled field.
fn interp_cubic(data: &[f64], g: crate::grid::Grid, x: [f64; 3]) -> f64 {
    let hs = g.spacing();
    let dims = [g.nx, g.ny, g.nz];
    let lens = [g.lx, g.ly, g.lz];
    let mut base = [0usize; 3];
    let mut w = [[0.0f64; 4]; 3];
    for a in 0..3 {
        let mut xa = x[a] % lens[a];
        if xa < 0.0 {
            xa += lens[a];
        }
        let s = xa / hs[a];
        let i0 = (s.floor() as usize) % dims[a];
        let f = s - s.floor();
        // 4-point Lagrange weights at node offsets -1, 0, 1, 2
        w[a] = [
            -f * (f - 1.0) * (f - 2.0) / 6.0,
            (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
            -(f + 1.0) * f * (f - 2.0) / 2.0,
            (f + 1.0) * f * (f - 1.0) / 6.0,
        ];
        base[a] = (i0 + dims[a] - 1) % dims[a];
    }
    let mut acc = 0.0;
    for kz in 0..4 {
        let iz = (base[2] + kz) % g.nz;
        for ky in 0..4 {
            let iy = (base[1] + ky) % g.ny;
            let row = (iz * g.ny + iy) * g.nx;
            let mut line = 0.0;
            for kx in 0..4 {
                let ix = (base[0] + kx) % g.nx;
                line += w[0][kx] * data[row + ix];
            }
            acc += w[1][ky] * w[2][kz] * line;
        }
    }
    acc
}

/// Departure point of the characteristic through a grid node (RK2 midpoint).
fn departure(fv: &FrozenVelocity, g: crate::grid::Grid, x: [f64; 3], dt: f64) -> [f64; 3] {
    let mut mid = [0.0; 3];
    for a in 0..3 {
        mid[a] = x[a] - 0.5 * dt * interp_cubic(&fv.u.comps[a], g, x);
    }
    let mut out = [0.0; 3];
    for a in 0..3 {
        out[a] = x[a] - dt * interp_cubic(&fv.u.comps[a], g, mid);
    }
    out
}

fn density_sl(
    _ws: &mut SpectralWorkspace,
    rho: &ScalarField,
    fv: &FrozenVelocity,
    dt: f64,
    forcing: Option<ScalarForcing>,
    t0: f64,
) -> ScalarField {
    let g = rho.grid;
    let mut out = ScalarField::zeros(g);
    let div: Vec<f64> = (0..g.len())
        .map(|i| fv.grad.comp(0, 0)[i] + fv.grad.comp(1, 1)[i] + fv.grad.comp(2, 2)[i])
        .collect();
    let gf = forcing.map(|f| (f(t0), f(t0 + dt)));
    for (ix, iy, iz, idx) in g.iter_indices() {
        let x = g.coords(ix, iy, iz);
        let foot = departure(fv, g, x, dt);
        let r = interp_cubic(&rho.data, g, foot);
        let d_foot = interp_cubic(&div, g, foot);
        let d_here = div[idx];
        out.data[idx] = r * (-0.5 * dt * (d_foot + d_here)).exp();
        if let Some((ref g0, ref g1)) = gf {
            out.data[idx] += 0.5 * dt * (interp_cubic(&g0.data, g, foot) + g1.data[idx]);
        }
    }
    out
}

fn deformation_sl(
    _ws: &mut SpectralWorkspace,
    e: &TensorField,
    fv: &FrozenVelocity,
    dt: f64,
    forcing: Option<TensorForcing>,
    t0: f64,
) -> TensorField {
    let g = e.grid;
    let mut out = TensorField::zeros(g);
    let gf0 = forcing.map(|f| f(t0));
    let gf1 = forcing.map(|f| f(t0 + dt));
    for (ix, iy, iz, idx) in g.iter_indices() {
        let x = g.coords(ix, iy, iz);
        let foot = departure(fv, g, x, dt);
        let mut e_foot = [[0.0f64; 3]; 3];
        let mut g_foot = [[0.0f64; 3]; 3];
        let mut g_here = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                e_foot[i][j] = interp_cubic(e.comp(i, j), g, foot);
                g_foot[i][j] = interp_cubic(fv.grad.comp(i, j), g, foot);
                g_here[i][j] = fv.grad.comp(i, j)[idx];
            }
        }
        // Heun step of dE/dt = G E + G along the characteristic
        let mut k1 = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut s = g_foot[i][j];
                for l in 0..3 {
                    s += g_foot[i][l] * e_foot[l][j];
                }
                if let Some(ref f0) = gf0 {
                    s += interp_cubic(f0.comp(i, j), g, foot);
                }
                k1[i][j] = s;
            }
        }
        let mut pred = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                pred[i][j] = e_foot[i][j] + dt * k1[i][j];
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let mut k2 = g_here[i][j];
                for l in 0..3 {
                    k2 += g_here[i][l] * pred[l][j];
                }
                if let Some(ref f1) = gf1 {
                    k2 += f1.comp(i, j)[idx];
                }
                out.comp_mut(i, j)[idx] = e_foot[i][j] + 0.5 * dt * (k1[i][j] + k2);
            }
        }
    }
    out
}

// ---------------------------------------------------------------- sigma

/// `sigma = grad(ln rho)`, spectral gradient of the pointwise logarithm.
pub fn sigma_from_density(ws: &mut SpectralWorkspace, rho: &ScalarField) -> Result<SigmaField> {
    let min = rho.min();
    if !(min > 0.0) {
        return Err(CvefError::NonPositiveDensity { min });
    }
    let logr = ScalarField {
        grid: rho.grid,
        data: rho.data.iter().map(|v| v.ln()).collect(),
    };
    Ok(SigmaField {
        sigma: ws.gradient(&logr),
    })
}

/// Norms of the residual of `d_t sigma + grad(u . sigma) = 0` evaluated by
/// central differences on saved states.
pub struct SigmaResidual {
    pub l2: f64,
    pub linf: f64,
}

pub fn sigma_evolution_residual(
    ws: &mut SpectralWorkspace,
    rho_series: &[ScalarField],
    u_series: &[VectorField],
    dt: f64,
) -> Result<SigmaResidual> {
    if rho_series.len() != u_series.len() {
        return Err(CvefError::InsufficientHistory {
            needed: rho_series.len(),
            got: u_series.len(),
        });
    }
    if rho_series.len() < 3 {
        return Err(CvefError::InsufficientHistory {
            needed: 3,
            got: rho_series.len(),
        });
    }
    let g = rho_series[0].grid;
    let w = g.cell_volume();
    let mut l2 = 0.0f64;
    let mut linf = 0.0f64;
    let sigmas: Vec<VectorField> = rho_series
        .iter()
        .map(|r| sigma_from_density(ws, r).map(|s| s.sigma))
        .collect::<Result<_>>()?;
    for m in 1..rho_series.len() - 1 {
        let mut udots = ScalarField::zeros(g);
        for i in 0..g.len() {
            udots.data[i] = u_series[m].comps[0][i] * sigmas[m].comps[0][i]
                + u_series[m].comps[1][i] * sigmas[m].comps[1][i]
                + u_series[m].comps[2][i] * sigmas[m].comps[2][i];
        }
        let gu = ws.gradient(&udots);
        let mut sq = 0.0;
        for c in 0..3 {
            for i in 0..g.len() {
                let dsdt = (sigmas[m + 1].comps[c][i] - sigmas[m - 1].comps[c][i]) / (2.0 * dt);
                let r = dsdt + gu.comps[c][i];
                sq += r * r;
                linf = linf.max(r.abs());
            }
        }
        l2 = l2.max((sq * w).sqrt());
    }
    Ok(SigmaResidual { l2, linf })
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
    fn zero_velocity_is_identity_for_both_solvers() {
        let g = grid(16);
        let mut ws = SpectralWorkspace::new(g);
        let rho = ScalarField::from_fn(g, |x, y, _| 1.0 + 0.1 * (x + y).sin());
        let u = VectorField::zeros(g);
        let opts = TransportOptions::default();
        let r2 = advance_density(&mut ws, &rho, &u, 1e-2, &opts).unwrap();
        assert_eq!(r2, rho);
        let mut e = TensorField::zeros(g);
        e.comp_mut(0, 1)
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = (i % 7) as f64 * 0.01);
        let e2 = advance_deformation(&mut ws, &e, &u, 1e-2, &opts).unwrap();
        assert_eq!(e2, e);
    }

    #[test]
    fn density_pure_advection_translates_profile() {
        let g = grid(32);
        let mut ws = SpectralWorkspace::new(g);
        let rho = ScalarField::from_fn(g, |x, _, _| 1.0 + 0.01 * x.sin());
        let c = 1.0;
        let u = VectorField::from_fn(g, |_, _, _| [c, 0.0, 0.0]);
        let dt = 1e-2;
        let out = advance_density(&mut ws, &rho, &u, dt, &TransportOptions::default()).unwrap();
        let mut worst = 0.0f64;
        for (ix, iy, iz, idx) in g.iter_indices() {
            let [x, _, _] = g.coords(ix, iy, iz);
            let exact = 1.0 + 0.01 * (x - c * dt).sin();
            worst = worst.max((out.data[idx] - exact).abs());
        }
        // one RK4 step of a single advected mode: error ~ amp (k c dt)^5 / 120
        assert!(worst < 1e-12, "translation error {worst:.3e}");
    }

    #[test]
    fn density_step_conserves_mass() {
        let g = grid(16);
        let mut ws = SpectralWorkspace::new(g);
        let rho = ScalarField::from_fn(g, |x, y, z| 1.0 + 0.2 * (x.sin() * y.cos() + z.sin()));
        let u = VectorField::from_fn(g, |x, y, _| {
            [0.3 * y.sin(), 0.2 * x.cos(), 0.1 * (x + y).sin()]
        });
        let m0: f64 = rho.data.iter().sum::<f64>() * g.cell_volume();
        let out = advance_density(&mut ws, &rho, &u, 5e-2, &TransportOptions::default()).unwrap();
        let m1: f64 = out.data.iter().sum::<f64>() * g.cell_volume();
        assert!(
            ((m1 - m0) / m0).abs() < 1e-12,
            "mass drift {:e}",
            (m1 - m0) / m0
        );
    }

    #[test]
    fn density_positivity_bound_with_slack() {
        let g = grid(16);
        let mut ws = SpectralWorkspace::new(g);
        let rho = ScalarField::from_fn(g, |x, _, _| 1.0 + 0.5 * x.sin());
        let u = VectorField::from_fn(g, |x, _, _| [0.3 * x.sin(), 0.0, 0.0]);
        let fv = FrozenVelocity::compute(&mut ws, &u);
        let dt = 0.2;
        let out = advance_density(&mut ws, &rho, &u, dt, &TransportOptions::default()).unwrap();
        let max_div = {
            let mut m = 0.0f64;
            for i in 0..g.len() {
                m = m.max(
                    (fv.grad.comp(0, 0)[i] + fv.grad.comp(1, 1)[i] + fv.grad.comp(2, 2)[i]).abs(),
                );
            }
            m
        };
        // characteristic bound with a 2x slack factor in the exponent
        let floor = rho.min() * (-2.0 * dt * max_div).exp();
        assert!(out.min() >= floor, "min {} < floor {}", out.min(), floor);
    }

    #[test]
    fn density_cfl_violation_detected() {
        let g = grid(8);
        let mut ws = SpectralWorkspace::new(g);
        let rho = ScalarField::constant(g, 1.0);
        let u = VectorField::from_fn(g, |_, _, _| [10.0, 0.0, 0.0]);
        let err = advance_density(&mut ws, &rho, &u, 0.1, &TransportOptions::default());
        assert!(matches!(err, Err(CvefError::CflViolation { .. })));
    }

    #[test]
    fn density_positivity_lost_detected() {
        let g = grid(8);
        let mut ws = SpectralWorkspace::new(g);
        // sharp near-vacuum profile compressed hard over many long steps
        let rho = ScalarField::from_fn(g, |x, _, _| 1.0 + 0.999 * (2.0 * x).sin());
        let u = VectorField::from_fn(g, |x, _, _| [0.45 * (2.0 * x).cos(), 0.0, 0.0]);
        let opts = TransportOptions::default();
        let mut r = rho.clone();
        let mut lost = false;
        for _ in 0..40 {
            match advance_density(&mut ws, &r, &u, 0.5, &opts) {
                Ok(next) => r = next,
                Err(CvefError::PositivityLost { .. }) => {
                    lost = true;
                    break;
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(lost, "expected positivity loss on rough data");
    }

    #[test]
    fn deformation_constant_gradient_is_exact_nilpotent_exp() {
        // inject a spatially constant velocity gradient N with N12 = alpha:
        // E(t) = exp(tN) - I = tN, so one step gives E12 = alpha dt exactly
        let g = grid(8);
        let mut ws = SpectralWorkspace::new(g);
        let alpha = 0.37;
        let mut n = TensorField::zeros(g);
        n.comp_mut(0, 1).iter_mut().for_each(|v| *v = alpha);
        let fv = FrozenVelocity::from_parts(VectorField::zeros(g), n);
        let e0 = TensorField::zeros(g);
        let dt = 0.25;
        let out = advance_deformation_frozen(
            &mut ws,
            &e0,
            &fv,
            dt,
            &TransportOptions::default(),
            None,
            0.0,
        )
        .unwrap();
        for idx in 0..g.len() {
            assert!((out.comp(0, 1)[idx] - alpha * dt).abs() < 1e-12);
            for (i, j) in [(0, 0), (0, 2), (1, 0), (1, 1), (2, 2), (2, 1)] {
                assert!(out.comp(i, j)[idx].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transport_temporal_order_at_least_three() {
        // halving dt reduces the error against a dt/100 reference >= 8x * 0.9
        let g = grid(16);
        let mut ws = SpectralWorkspace::new(g);
        let rho = ScalarField::from_fn(g, |x, y, _| 1.0 + 0.05 * (x.sin() + (y + x).cos()));
        let mut e = TensorField::zeros(g);
        for (ix, iy, iz, idx) in g.iter_indices() {
            let [x, y, _] = g.coords(ix, iy, iz);
            let _ = iz;
            e.comp_mut(0, 0)[idx] = 0.05 * (x + y).sin();
            e.comp_mut(1, 2)[idx] = 0.05 * y.cos();
        }
        let u = VectorField::from_fn(g, |x, y, z| {
            [0.2 * y.sin(), 0.2 * (x + z).cos(), 0.1 * x.sin()]
        });
        let opts = TransportOptions::default();
        let dt = 0.1;

        let mut r_ref = rho.clone();
        let mut e_ref = e.clone();
        for _ in 0..100 {
            r_ref = advance_density(&mut ws, &r_ref, &u, dt / 100.0, &opts).unwrap();
            e_ref = advance_deformation(&mut ws, &e_ref, &u, dt / 100.0, &opts).unwrap();
        }

        let mut one_step_err = |n: usize| {
            let mut r = rho.clone();
            let mut t = e.clone();
            for _ in 0..n {
                r = advance_density(&mut ws, &r, &u, dt / n as f64, &opts).unwrap();
                t = advance_deformation(&mut ws, &t, &u, dt / n as f64, &opts).unwrap();
            }
            let mut err = 0.0f64;
            for i in 0..g.len() {
                err = err.max((r.data[i] - r_ref.data[i]).abs());
            }
            for c in 0..9 {
                for i in 0..g.len() {
                    err = err.max((t.comps[c][i] - e_ref.comps[c][i]).abs());
                }
            }
            err
        };
        let e1 = one_step_err(1);
        let e2 = one_step_err(2);
        assert!(
            e1 / e2 >= 8.0 * 0.9,
            "observed ratio {:.2} (errors {:.3e} -> {:.3e})",
            e1 / e2,
            e1,
            e2
        );
    }

    #[test]
    fn semi_lagrangian_cross_validates_spectral_scheme() {
        let g = grid(32);
        let mut ws = SpectralWorkspace::new(g);
        let rho = ScalarField::from_fn(g, |x, y, _| 1.0 + 0.05 * (x + y).sin());
        let u = VectorField::from_fn(g, |x, y, _| [0.3 * y.sin(), 0.2 * x.cos(), 0.0]);
        let dt = 2e-2;
        let rk = advance_density(&mut ws, &rho, &u, dt, &TransportOptions::default()).unwrap();
        let sl_opts = TransportOptions {
            scheme: Scheme::SemiLagrangianRk2,
            ..Default::default()
        };
        let sl = advance_density(&mut ws, &rho, &u, dt, &sl_opts).unwrap();
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            worst = worst.max((rk.data[i] - sl.data[i]).abs());
        }
        // SL carries interpolation error ~ h^4 |d4 rho| plus O(dt^3) in time
        assert!(worst < 5e-5, "schemes disagree by {worst:.3e}");
    }

    #[test]
    fn sigma_examples() {
        let g = grid(16);
        let mut ws = SpectralWorkspace::new(g);
        let rho = ScalarField::constant(g, 1.0);
        let s = sigma_from_density(&mut ws, &rho).unwrap();
        assert!(s.sigma.max_abs() < 1e-13);

        let rho = ScalarField::from_fn(g, |x, _, _| (0.01 * x.sin()).exp());
        let s = sigma_from_density(&mut ws, &rho).unwrap();
        for (ix, iy, iz, idx) in g.iter_indices() {
            let [x, _, _] = g.coords(ix, iy, iz);
            assert!((s.sigma.comps[0][idx] - 0.01 * x.cos()).abs() < 1e-12);
        }

        let mut bad = rho.clone();
        bad.data[0] = 0.0;
        assert!(matches!(
            sigma_from_density(&mut ws, &bad),
            Err(CvefError::NonPositiveDensity { .. })
        ));
    }

    #[test]
    fn sigma_residual_contract_errors() {
        let g = grid(8);
        let mut ws = SpectralWorkspace::new(g);
        let r = ScalarField::constant(g, 1.0);
        let u = VectorField::zeros(g);
        let err = sigma_evolution_residual(
            &mut ws,
            &[r.clone(), r.clone()],
            &[u.clone(), u.clone()],
            1e-3,
        );
        assert!(matches!(err, Err(CvefError::InsufficientHistory { .. })));
        let err = sigma_evolution_residual(
            &mut ws,
            &[r.clone(), r.clone(), r.clone()],
            &[u.clone(), u.clone()],
            1e-3,
        );
        assert!(matches!(err, Err(CvefError::InsufficientHistory { .. })));
        let res = sigma_evolution_residual(
            &mut ws,
            &[r.clone(), r.clone(), r.clone()],
            &[u.clone(), u.clone(), u.clone()],
            1e-3,
        )
        .unwrap();
        assert_eq!(res.l2, 0.0);
        assert_eq!(res.linf, 0.0);
    }
}
