//! Structural-identity diagnostics: energy balance, curl compatibility of
//! the deformation, the Piola constraint, trace and mass conservation, the
//! dissipative combination `Z = u - L(div E)`, the elliptic pressure
//! relation, and the monitored field norms.
//!
//! Every function here is a pure function of its inputs: the same state
//! produces the bitwise-same record.

use crate::error::{CvefError, Result};
use crate::field::{ScalarField, TensorField, VectorField};
use crate::spectral::SpectralWorkspace;
use crate::state::{pressure_potential, FlowState, PhysParams};
use crate::transport::sigma_from_density;

/// Floor for relative residual denominators.
pub const EPS_FLOOR: f64 = 1e-30;

/// Quadrature of a sampled scalar over the box.
fn integrate(grid: crate::grid::Grid, data: impl Iterator<Item = f64>) -> f64 {
    let w = grid.cell_volume();
    data.sum::<f64>() * w
}

/// Energy components of a state (unweighted by the scaling parameter).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// `int 1/2 rho |u|^2`
    pub kinetic: f64,
    /// `int 1/2 rho |E|^2`
    pub elastic_e: f64,
    /// `int 1/2 rho |F|^2` with `F = I + E`
    pub elastic_f: f64,
    /// `int (rho^gamma - gamma rho + gamma - 1) / (gamma - 1)`
    pub pressure: f64,
}

impl EnergyBreakdown {
    /// The combination that is conserved up to viscous dissipation:
    /// kinetic plus `nu^-2` times elastic and pressure parts.
    pub fn balance_total(&self, params: &PhysParams) -> f64 {
        self.kinetic + params.stress_weight() * (self.elastic_e + self.pressure)
    }
}

pub fn total_energy(state: &FlowState, params: &PhysParams) -> Result<EnergyBreakdown> {
    let g = state.grid();
    let min = state.rho.min();
    if !(min > 0.0) {
        return Err(CvefError::NonPositiveDensity { min });
    }
    let n = g.len();
    let mut kin = 0.0;
    let mut ee = 0.0;
    let mut ef = 0.0;
    for p in 0..n {
        let r = state.rho.data[p];
        let u2 = state.u.comps[0][p] * state.u.comps[0][p]
            + state.u.comps[1][p] * state.u.comps[1][p]
            + state.u.comps[2][p] * state.u.comps[2][p];
        kin += 0.5 * r * u2;
        let mut e2 = 0.0;
        let mut f2 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let e = state.e.comp(i, j)[p];
                let f = e + if i == j { 1.0 } else { 0.0 };
                e2 += e * e;
                f2 += f * f;
            }
        }
        ee += 0.5 * r * e2;
        ef += 0.5 * r * f2;
    }
    let w = g.cell_volume();
    let pot = pressure_potential(&state.rho, params.gamma)?;
    Ok(EnergyBreakdown {
        kinetic: kin * w,
        elastic_e: ee * w,
        elastic_f: ef * w,
        pressure: integrate(g, pot.data.iter().cloned()),
    })
}

/// `int mu |grad u|^2 + (mu + lambda) |div u|^2`.
pub fn dissipation_rate(ws: &mut SpectralWorkspace, u: &VectorField, params: &PhysParams) -> f64 {
    if u.max_abs() == 0.0 {
        return 0.0;
    }
    let grad = ws.jacobian(u);
    let g = u.grid;
    let mut acc = 0.0;
    for p in 0..g.len() {
        let mut g2 = 0.0;
        for c in 0..9 {
            g2 += grad.comps[c][p] * grad.comps[c][p];
        }
        let div = grad.comp(0, 0)[p] + grad.comp(1, 1)[p] + grad.comp(2, 2)[p];
        acc += params.mu * g2 + (params.mu + params.lambda) * div * div;
    }
    acc * g.cell_volume()
}

/// Max-norm and root-mean-square of the curl-compatibility residual
/// `d_k E_ij + E_lk d_l E_ij - d_j E_ik - E_lj d_l E_ik`.
pub fn curl_compatibility_residual(ws: &mut SpectralWorkspace, e: &TensorField) -> (f64, f64) {
    if e.max_abs() == 0.0 {
        return (0.0, 0.0);
    }
    let g = e.grid;
    // dealias the field once; products below are then alias-clean pointwise
    let mut ed = e.clone();
    let mut spec = ws.zero_spec();
    let mut grad: [TensorField; 3] = std::array::from_fn(|_| TensorField::zeros(g));
    let mut dbuf = ws.zero_spec();
    for c in 0..9 {
        ws.forward_into(&e.comps[c], &mut spec);
        ws.apply_mask(&mut spec);
        ws.inverse_into(&spec, &mut ed.comps[c]);
        for axis in 0..3 {
            ws.deriv_into(&spec, axis, &mut dbuf);
            ws.inverse_into(&dbuf, &mut grad[axis].comps[c]);
        }
    }
    let n = g.len();
    let mut linf = 0.0f64;
    let mut sq = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                if j == k {
                    continue;
                }
                for p in 0..n {
                    let mut r = grad[k].comp(i, j)[p] - grad[j].comp(i, k)[p];
                    for l in 0..3 {
                        r += ed.comp(l, k)[p] * grad[l].comp(i, j)[p]
                            - ed.comp(l, j)[p] * grad[l].comp(i, k)[p];
                    }
                    linf = linf.max(r.abs());
                    sq += r * r;
                }
            }
        }
    }
    // rms over all 27 component triples (diagonal j = k vanishes identically)
    let rms = (sq / (27.0 * n as f64)).sqrt();
    (linf, rms)
}

/// `L2` norm of `div(rho F^T)` with `F = I + E`; the constant part of the
/// tensor is removed before the transform so equilibrium gives exact zero.
pub fn piola_residual(ws: &mut SpectralWorkspace, rho: &ScalarField, e: &TensorField) -> f64 {
    let g = rho.grid;
    let n = g.len();
    let mut q = TensorField::zeros(g);
    // w_i = d_j (rho F_ji), so component (i,j) of the divergence argument
    // is rho F_ji - delta_ji
    for i in 0..3 {
        for j in 0..3 {
            let src = e.comp(j, i);
            let out = q.comp_mut(i, j);
            let dii = if i == j { 1.0 } else { 0.0 };
            for p in 0..n {
                out[p] = rho.data[p] * (src[p] + dii) - dii;
            }
        }
    }
    if q.max_abs() == 0.0 {
        return 0.0;
    }
    let mut spec = ws.zero_spec();
    let mut dspec = ws.zero_spec();
    let mut acc = ws.zero_spec();
    let mut comp = vec![0.0; n];
    let mut sq = 0.0;
    for i in 0..3 {
        acc.iter_mut()
            .for_each(|v| *v = rustfft::num_complex::Complex64::default());
        for j in 0..3 {
            ws.forward_into(q.comp(i, j), &mut spec);
            ws.apply_mask(&mut spec);
            ws.deriv_into(&spec, j, &mut dspec);
            for (a, b) in acc.iter_mut().zip(&dspec) {
                *a += b;
            }
        }
        ws.inverse_into(&acc, &mut comp);
        for v in &comp {
            sq += v * v;
        }
    }
    (sq * g.cell_volume()).sqrt()
}

/// `int rho tr E`.
pub fn trace_integral(rho: &ScalarField, e: &TensorField) -> f64 {
    let g = rho.grid;
    integrate(
        g,
        (0..g.len()).map(|p| {
            rho.data[p] * (e.comp(0, 0)[p] + e.comp(1, 1)[p] + e.comp(2, 2)[p])
        }),
    )
}

/// The dissipative combination `Z = u - L(div E)` and its norms.
pub struct ZCombination {
    pub z: VectorField,
    pub l2: f64,
    pub w12: f64,
}

pub fn dissipation_combination(
    ws: &mut SpectralWorkspace,
    state: &FlowState,
    params: &PhysParams,
) -> Result<ZCombination> {
    let div_e = ws.divergence_tensor(&state.e);
    let z1 = ws.lame_solve(&div_e, params.mu, params.lambda)?;
    let mut z = state.u.clone();
    z.axpy(-1.0, &z1);
    let l2 = z.norm_l2();
    let w12 = if l2 == 0.0 && z.max_abs() == 0.0 {
        0.0
    } else {
        let gz = ws.jacobian(&z);
        let g = z.grid;
        let mut sq = 0.0;
        for c in 0..9 {
            for v in &gz.comps[c] {
                sq += v * v;
            }
        }
        (l2 * l2 + sq * g.cell_volume()).sqrt()
    };
    Ok(ZCombination { z, l2, w12 })
}

/// `L2` norm of the residual of the elliptic pressure relation
/// `lap(P + rho) = div div(rho E E^T) - div(rho u.grad u) - div(rho u_t)
///  + (lambda + 2 mu) lap div u`
/// evaluated at the middle of a saved state triple (`u_t` by central
/// differences). Pressure and elastic terms carry the `nu^-2` weight.
pub fn elliptic_pressure_residual(
    ws: &mut SpectralWorkspace,
    states: &[FlowState],
    dt: f64,
    params: &PhysParams,
) -> Result<f64> {
    if states.len() < 3 {
        return Err(CvefError::InsufficientHistory {
            needed: 3,
            got: states.len(),
        });
    }
    let mid = states.len() / 2;
    let (prev, cur, next) = (&states[mid - 1], &states[mid], &states[mid + 1]);
    let g = cur.grid();
    let n = g.len();
    let wgt = params.stress_weight();
    let min = cur.rho.min();
    if !(min > 0.0) {
        return Err(CvefError::NonPositiveDensity { min });
    }

    let mut residual = ws.zero_spec();
    let mut spec = ws.zero_spec();
    let mut dspec = ws.zero_spec();
    let kx = ws.k_full_axis(0).to_vec();
    let ky = ws.k_full_axis(1).to_vec();
    let kz = ws.k_full_axis(2).to_vec();
    let hx = ws.hx();
    let ks = |idx: usize| -> [f64; 3] {
        [
            kx[idx % hx],
            ky[(idx / hx) % g.ny],
            kz[idx / (hx * g.ny)],
        ]
    };

    // lap(nu^-2 (P - 1) + nu^-2 (rho - 1))
    let mut scal = vec![0.0; n];
    for p in 0..n {
        scal[p] =
            wgt * ((cur.rho.data[p].powf(params.gamma) - 1.0) + (cur.rho.data[p] - 1.0));
    }
    ws.forward_into(&scal, &mut spec);
    for (idx, v) in spec.iter_mut().enumerate() {
        let k = ks(idx);
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        *v *= -k2;
    }
    for (r, v) in residual.iter_mut().zip(&spec) {
        *r += v;
    }

    // - nu^-2 div div(rho E E^T)
    let mut t = vec![0.0; n];
    for i in 0..3 {
        for j in 0..3 {
            for p in 0..n {
                let mut s = 0.0;
                for k in 0..3 {
                    s += cur.e.comp(i, k)[p] * cur.e.comp(j, k)[p];
                }
                t[p] = cur.rho.data[p] * s;
            }
            ws.forward_into(&t, &mut spec);
            for (idx, v) in spec.iter_mut().enumerate() {
                let k = ks(idx);
                *v *= -k[i] * k[j];
            }
            for (r, v) in residual.iter_mut().zip(&spec) {
                *r -= wgt * v;
            }
        }
    }

    // + div(rho u.grad u) + div(rho u_t): both as ik . (vector spectrum)
    let grad_u = ws.jacobian(&cur.u);
    let mut vecf = vec![0.0; n];
    for i in 0..3 {
        for p in 0..n {
            let conv = grad_u.comp(i, 0)[p] * cur.u.comps[0][p]
                + grad_u.comp(i, 1)[p] * cur.u.comps[1][p]
                + grad_u.comp(i, 2)[p] * cur.u.comps[2][p];
            let ut = (next.u.comps[i][p] - prev.u.comps[i][p]) / (2.0 * dt);
            vecf[p] = cur.rho.data[p] * (conv + ut);
        }
        ws.forward_into(&vecf, &mut spec);
        ws.deriv_into(&spec, i, &mut dspec);
        for (r, v) in residual.iter_mut().zip(&dspec) {
            *r += v;
        }
    }

    // - (lambda + 2 mu) lap div u
    let mut divu = ws.zero_spec();
    for i in 0..3 {
        ws.forward_into(&cur.u.comps[i], &mut spec);
        ws.deriv_into(&spec, i, &mut dspec);
        for (a, b) in divu.iter_mut().zip(&dspec) {
            *a += b;
        }
    }
    let visc = params.lambda + 2.0 * params.mu;
    for (idx, (r, v)) in residual.iter_mut().zip(&divu).enumerate() {
        let k = ks(idx);
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        *r -= visc * (-k2) * v;
    }

    ws.apply_mask(&mut residual);
    let mut out = vec![0.0; n];
    ws.inverse_into(&residual, &mut out);
    let sq: f64 = out.iter().map(|v| v * v).sum();
    Ok((sq * g.cell_volume()).sqrt())
}

/// Exponent for the `L^q` / `W^{1,q}` surrogates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    pub q: f64,
}

impl NormSpec {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 3.0) || !q.is_finite() {
            return Err(CvefError::InvalidParams(format!(
                "norms.q: {q} must be > 3"
            )));
        }
        Ok(NormSpec { q })
    }
}

impl Default for NormSpec {
    fn default() -> Self {
        NormSpec { q: 4.0 }
    }
}

/// Monitored norms: `|sigma|_Lq`, `|grad E|_Lq`, `|E|_W1q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldNorms {
    pub sigma_lq: f64,
    pub grad_e_lq: f64,
    pub e_w1q: f64,
}

fn lq_of_sq(grid: crate::grid::Grid, sq: impl Iterator<Item = f64>, q: f64) -> f64 {
    let w = grid.cell_volume();
    let s: f64 = sq.map(|v| v.powf(0.5 * q)).sum();
    (s * w).powf(1.0 / q)
}

pub fn norms(
    ws: &mut SpectralWorkspace,
    state: &FlowState,
    spec: &NormSpec,
) -> Result<FieldNorms> {
    NormSpec::new(spec.q)?;
    let g = state.grid();
    let n = g.len();
    let q = spec.q;

    let sigma_lq = if state.rho.min() == 1.0 && state.rho.max() == 1.0 {
        0.0
    } else {
        let s = sigma_from_density(ws, &state.rho)?.sigma;
        lq_of_sq(
            g,
            (0..n).map(|p| {
                s.comps[0][p] * s.comps[0][p]
                    + s.comps[1][p] * s.comps[1][p]
                    + s.comps[2][p] * s.comps[2][p]
            }),
            q,
        )
    };

    let (grad_e_lq, e_w1q) = if state.e.max_abs() == 0.0 {
        (0.0, 0.0)
    } else {
        let mut spec_b = ws.zero_spec();
        let mut dbuf = ws.zero_spec();
        let mut grad: [TensorField; 3] = std::array::from_fn(|_| TensorField::zeros(g));
        for c in 0..9 {
            ws.forward_into(&state.e.comps[c], &mut spec_b);
            for axis in 0..3 {
                ws.deriv_into(&spec_b, axis, &mut dbuf);
                ws.inverse_into(&dbuf, &mut grad[axis].comps[c]);
            }
        }
        let ge = lq_of_sq(
            g,
            (0..n).map(|p| {
                let mut s = 0.0;
                for axis in 0..3 {
                    for c in 0..9 {
                        s += grad[axis].comps[c][p] * grad[axis].comps[c][p];
                    }
                }
                s
            }),
            q,
        );
        let elq = lq_of_sq(
            g,
            (0..n).map(|p| {
                let mut s = 0.0;
                for c in 0..9 {
                    s += state.e.comps[c][p] * state.e.comps[c][p];
                }
                s
            }),
            q,
        );
        (ge, (elq.powf(q) + ge.powf(q)).powf(1.0 / q))
    };

    Ok(FieldNorms {
        sigma_lq,
        grad_e_lq,
        e_w1q,
    })
}

/// One time-sample of every monitored quantity; the CSV column order of the
/// output format follows the field order here.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub e_kin: f64,
    pub e_elastic_e: f64,
    pub e_elastic_f: f64,
    pub e_press: f64,
    pub diss_rate: f64,
    pub diss_cum: f64,
    pub balance_res: f64,
    pub curl_linf: f64,
    pub curl_l2: f64,
    pub piola_l2: f64,
    pub trace_int: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub sigma_lq: f64,
    pub grad_e_lq: f64,
    pub e_w1q: f64,
    pub z_l2: f64,
    pub picard_iters: usize,
    pub picard_ratio_max: f64,
}

impl DiagnosticsRecord {
    /// State-dependent columns; the run-level columns (`diss_cum`,
    /// `balance_res`, fixed-point stats) are left at zero for the caller.
    pub fn compute(
        ws: &mut SpectralWorkspace,
        state: &FlowState,
        params: &PhysParams,
        nspec: &NormSpec,
    ) -> Result<Self> {
        let energy = total_energy(state, params)?;
        let (curl_linf, curl_l2) = curl_compatibility_residual(ws, &state.e);
        let fn_ = norms(ws, state, nspec)?;
        let z = dissipation_combination(ws, state, params)?;
        Ok(DiagnosticsRecord {
            t: state.t,
            mass: integrate(state.grid(), state.rho.data.iter().cloned()),
            e_kin: energy.kinetic,
            e_elastic_e: energy.elastic_e,
            e_elastic_f: energy.elastic_f,
            e_press: energy.pressure,
            diss_rate: dissipation_rate(ws, &state.u, params),
            diss_cum: 0.0,
            balance_res: 0.0,
            curl_linf,
            curl_l2,
            piola_l2: piola_residual(ws, &state.rho, &state.e),
            trace_int: trace_integral(&state.rho, &state.e),
            rho_min: state.rho.min(),
            rho_max: state.rho.max(),
            sigma_lq: fn_.sigma_lq,
            grad_e_lq: fn_.grad_e_lq,
            e_w1q: fn_.e_w1q,
            z_l2: z.l2,
            picard_iters: 0,
            picard_ratio_max: 0.0,
        })
    }

    /// The conserved energy combination of this record.
    pub fn balance_energy(&self, params: &PhysParams) -> f64 {
        self.e_kin + params.stress_weight() * (self.e_elastic_e + self.e_press)
    }
}

/// Relative energy-balance residual of a record history:
/// `|E(t) + D(t) - E(0)| / max(E(0), eps)`.
pub fn energy_balance_residual(
    records: &[DiagnosticsRecord],
    params: &PhysParams,
) -> Result<f64> {
    if records.is_empty() {
        return Err(CvefError::InsufficientHistory { needed: 1, got: 0 });
    }
    let e0 = records[0].balance_energy(params);
    let last = records.last().unwrap();
    let drift = last.balance_energy(params) + last.diss_cum - e0;
    Ok(drift.abs() / e0.max(EPS_FLOOR))
}
