//! Method of manufactured solutions: closed-form fields given as tables of
//! low-order trigonometric modes with polynomial-in-time amplitudes, the
//! exact forcing that makes them solve the governing system, and the
//! convergence harness that sweeps resolution and time step.

use crate::error::{CvefError, Result};
use crate::field::{ScalarField, TensorField, VectorField};
use crate::grid::Grid;
use crate::momentum::MomentumOptions;
use crate::picard::{picard_step_forced, Forcing, PicardOptions};
use crate::spectral::SpectralWorkspace;
use crate::state::{FlowState, PhysParams};
use crate::transport::TransportOptions;

/// Per-axis factor of a trigonometric mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    One,
    Sin,
    Cos,
}

impl Trig {
    #[inline]
    fn eval(self, a: f64) -> f64 {
        match self {
            Trig::One => 1.0,
            Trig::Sin => a.sin(),
            Trig::Cos => a.cos(),
        }
    }

    /// First derivative with respect to the argument.
    #[inline]
    fn d1(self, a: f64) -> f64 {
        match self {
            Trig::One => 0.0,
            Trig::Sin => a.cos(),
            Trig::Cos => -a.sin(),
        }
    }
}

/// One term `amp * T(t) * f1(k1 b1 x1) f2(k2 b2 x2) f3(k3 b3 x3)` with a
/// polynomial time amplitude `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTerm {
    pub amp: f64,
    pub m: [i64; 3],
    pub trig: [Trig; 3],
    /// `T(t) = tpoly[0] + tpoly[1] t + ...`
    pub tpoly: Vec<f64>,
}

impl ModeTerm {
    fn tval(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.tpoly.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }

    fn tderiv(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (i, c) in self.tpoly.iter().enumerate().skip(1).rev() {
            acc = acc * t + i as f64 * c;
        }
        acc
    }

    /// Spatial factor with derivative orders `(o1, o2, o3)`, each 0..=2.
    fn spatial(&self, x: [f64; 3], base: [f64; 3], orders: [u8; 3]) -> f64 {
        let mut v = 1.0;
        for a in 0..3 {
            let k = self.m[a] as f64 * base[a];
            let arg = k * x[a];
            let f = match orders[a] {
                0 => self.trig[a].eval(arg),
                1 => k * self.trig[a].d1(arg),
                _ => match self.trig[a] {
                    Trig::One => 0.0,
                    t => -k * k * t.eval(arg),
                },
            };
            v *= f;
        }
        v
    }

    fn value(&self, x: [f64; 3], base: [f64; 3], t: f64) -> f64 {
        self.amp * self.tval(t) * self.spatial(x, base, [0, 0, 0])
    }

    fn dt(&self, x: [f64; 3], base: [f64; 3], t: f64) -> f64 {
        self.amp * self.tderiv(t) * self.spatial(x, base, [0, 0, 0])
    }

    fn dx(&self, x: [f64; 3], base: [f64; 3], t: f64, axis: usize) -> f64 {
        let mut o = [0u8; 3];
        o[axis] = 1;
        self.amp * self.tval(t) * self.spatial(x, base, o)
    }

    fn d2x(&self, x: [f64; 3], base: [f64; 3], t: f64, a: usize, b: usize) -> f64 {
        let mut o = [0u8; 3];
        o[a] += 1;
        o[b] += 1;
        self.amp * self.tval(t) * self.spatial(x, base, o)
    }
}

fn sum_terms(terms: &[ModeTerm], f: impl Fn(&ModeTerm) -> f64) -> f64 {
    terms.iter().map(f).sum()
}

/// Closed-form `(rho*, u*, E*)` on a box, valid on `[0, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedSolution {
    pub box_lengths: [f64; 3],
    pub t_max: f64,
    pub rho_base: f64,
    pub rho: Vec<ModeTerm>,
    pub u: [Vec<ModeTerm>; 3],
    /// Row-major component lists, entry `3 i + j` for `E_ij`.
    pub e: Vec<Vec<ModeTerm>>,
}

impl ManufacturedSolution {
    /// The equilibrium solution: zero forcing, zero error.
    pub fn equilibrium(box_len: f64) -> Self {
        ManufacturedSolution {
            box_lengths: [box_len; 3],
            t_max: f64::INFINITY,
            rho_base: 1.0,
            rho: vec![],
            u: Default::default(),
            e: vec![vec![]; 9],
        }
    }

    /// A generic smooth solution with modes at most one per axis and
    /// linear-in-time amplitudes; `amplitude` sets the field size.
    pub fn standard(amplitude: f64, box_len: f64) -> Self {
        let a = amplitude;
        let term = |amp: f64, m: [i64; 3], trig: [Trig; 3], tp: &[f64]| ModeTerm {
            amp,
            m,
            trig,
            tpoly: tp.to_vec(),
        };
        use Trig::*;
        ManufacturedSolution {
            box_lengths: [box_len; 3],
            // rho stays positive as long as |rho - 1| < 1/2 on the window
            t_max: 4.0,
            rho_base: 1.0,
            rho: vec![term(a, [1, 1, 0], [Sin, Cos, One], &[1.0, 0.5])],
            u: [
                vec![term(a, [0, 1, 1], [One, Sin, Sin], &[1.0, -0.25])],
                vec![term(0.8 * a, [1, 0, 1], [Cos, One, Sin], &[1.0, 0.5])],
                vec![term(0.6 * a, [1, 1, 0], [Sin, Sin, One], &[0.5, 0.25])],
            ],
            e: vec![
                vec![term(0.5 * a, [0, 1, 1], [One, Cos, Sin], &[1.0, 0.3])],
                vec![term(0.7 * a, [1, 0, 0], [Sin, One, One], &[1.0, -0.2])],
                vec![],
                vec![],
                vec![term(0.4 * a, [0, 1, 0], [One, Sin, One], &[1.0, 0.4])],
                vec![term(0.6 * a, [0, 0, 1], [One, One, Cos], &[0.7, 0.2])],
                vec![term(0.4 * a, [0, 1, 0], [One, Cos, One], &[1.0, 0.4])],
                vec![],
                vec![term(0.5 * a, [1, 0, 1], [Cos, One, Cos], &[1.0, 0.1])],
            ],
        }
    }

    /// The same solution in the scaled variables `y = nu x`, `s = nu^2 t`,
    /// `v = u / nu`: an exact transformation of the coefficient tables.
    pub fn scaled(&self, nu: f64) -> Self {
        let xform_time = |terms: &[ModeTerm], amp_factor: f64| -> Vec<ModeTerm> {
            terms
                .iter()
                .map(|t| {
                    let tpoly = t
                        .tpoly
                        .iter()
                        .enumerate()
                        .map(|(i, c)| c / nu.powi(2 * i as i32))
                        .collect();
                    ModeTerm {
                        amp: t.amp * amp_factor,
                        tpoly,
                        ..t.clone()
                    }
                })
                .collect()
        };
        ManufacturedSolution {
            box_lengths: [
                self.box_lengths[0] * nu,
                self.box_lengths[1] * nu,
                self.box_lengths[2] * nu,
            ],
            t_max: self.t_max * nu * nu,
            rho_base: self.rho_base,
            rho: xform_time(&self.rho, 1.0),
            u: std::array::from_fn(|c| xform_time(&self.u[c], 1.0 / nu)),
            e: self.e.iter().map(|t| xform_time(t, 1.0)).collect(),
        }
    }

    fn base(&self) -> [f64; 3] {
        [
            2.0 * std::f64::consts::PI / self.box_lengths[0],
            2.0 * std::f64::consts::PI / self.box_lengths[1],
            2.0 * std::f64::consts::PI / self.box_lengths[2],
        ]
    }

    pub fn check_window(&self, t: f64) -> Result<()> {
        if t < 0.0 || t > self.t_max {
            return Err(CvefError::OutOfWindow {
                t,
                t_max: self.t_max,
            });
        }
        Ok(())
    }

    fn check_grid(&self, grid: Grid) -> Result<()> {
        let ok = (grid.lx - self.box_lengths[0]).abs() < 1e-12 * self.box_lengths[0]
            && (grid.ly - self.box_lengths[1]).abs() < 1e-12 * self.box_lengths[1]
            && (grid.lz - self.box_lengths[2]).abs() < 1e-12 * self.box_lengths[2];
        if ok {
            Ok(())
        } else {
            Err(CvefError::GridMismatch(
                "grid box does not match the manufactured solution".into(),
            ))
        }
    }

    pub fn rho_at(&self, x: [f64; 3], t: f64) -> f64 {
        self.rho_base + sum_terms(&self.rho, |m| m.value(x, self.base(), t))
    }

    pub fn u_at(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        std::array::from_fn(|c| sum_terms(&self.u[c], |m| m.value(x, self.base(), t)))
    }

    pub fn e_at(&self, x: [f64; 3], t: f64) -> [[f64; 3]; 3] {
        let b = self.base();
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = sum_terms(&self.e[3 * i + j], |m| m.value(x, b, t));
            }
        }
        out
    }

    /// Sample the exact state on a grid.
    pub fn sample_state(&self, grid: Grid, t: f64) -> Result<FlowState> {
        self.check_window(t)?;
        self.check_grid(grid)?;
        let mut st = FlowState::equilibrium(grid);
        st.t = t;
        for (ix, iy, iz, idx) in grid.iter_indices() {
            let x = grid.coords(ix, iy, iz);
            st.rho.data[idx] = self.rho_at(x, t);
            let u = self.u_at(x, t);
            let e = self.e_at(x, t);
            for c in 0..3 {
                st.u.comps[c][idx] = u[c];
            }
            for i in 0..3 {
                for j in 0..3 {
                    st.e.comp_mut(i, j)[idx] = e[i][j];
                }
            }
        }
        if !(st.rho.min() > 0.0) {
            return Err(CvefError::NonPositiveDensity { min: st.rho.min() });
        }
        Ok(st)
    }

    /// Forcing at one point: the residuals of the governing equations at
    /// the manufactured fields, all derivatives symbolic.
    pub fn forcing_at(
        &self,
        x: [f64; 3],
        t: f64,
        params: &PhysParams,
    ) -> (f64, [f64; 3], [[f64; 3]; 3]) {
        let b = self.base();
        let w = params.stress_weight();

        let rho = self.rho_at(x, t);
        let rho_t = sum_terms(&self.rho, |m| m.dt(x, b, t));
        let rho_d: [f64; 3] = std::array::from_fn(|a| sum_terms(&self.rho, |m| m.dx(x, b, t, a)));

        let u = self.u_at(x, t);
        let u_t: [f64; 3] = std::array::from_fn(|c| sum_terms(&self.u[c], |m| m.dt(x, b, t)));
        let mut u_d = [[0.0; 3]; 3]; // u_d[i][j] = d u_i / d x_j
        let mut u_dd = [[[0.0; 3]; 3]; 3]; // u_dd[i][a][b] = d2 u_i / dx_a dx_b
        for i in 0..3 {
            for a in 0..3 {
                u_d[i][a] = sum_terms(&self.u[i], |m| m.dx(x, b, t, a));
                for bb in 0..3 {
                    u_dd[i][a][bb] = sum_terms(&self.u[i], |m| m.d2x(x, b, t, a, bb));
                }
            }
        }

        let e = self.e_at(x, t);
        let mut e_t = [[0.0; 3]; 3];
        let mut e_d = [[[0.0; 3]; 3]; 3]; // e_d[i][j][a] = d E_ij / d x_a
        for i in 0..3 {
            for j in 0..3 {
                e_t[i][j] = sum_terms(&self.e[3 * i + j], |m| m.dt(x, b, t));
                for a in 0..3 {
                    e_d[i][j][a] = sum_terms(&self.e[3 * i + j], |m| m.dx(x, b, t, a));
                }
            }
        }

        // continuity residual
        let mut g_rho = rho_t;
        for j in 0..3 {
            g_rho += rho_d[j] * u[j] + rho * u_d[j][j];
        }

        // momentum residual
        let f = |i: usize, k: usize| e[i][k] + if i == k { 1.0 } else { 0.0 };
        let df = |i: usize, k: usize, a: usize| e_d[i][k][a];
        let mut g_u = [0.0; 3];
        for i in 0..3 {
            let mut conv = 0.0;
            for k in 0..3 {
                conv += u[k] * u_d[i][k];
            }
            let mut lap = 0.0;
            for a in 0..3 {
                lap += u_dd[i][a][a];
            }
            let mut grad_div = 0.0;
            for j in 0..3 {
                grad_div += u_dd[j][j][i];
            }
            let grad_p = params.gamma * rho.powf(params.gamma - 1.0) * rho_d[i];
            // div of rho F F^T, row i
            let mut div_stress = 0.0;
            for j in 0..3 {
                for k in 0..3 {
                    div_stress += rho_d[j] * f(i, k) * f(j, k)
                        + rho * (df(i, k, j) * f(j, k) + f(i, k) * df(j, k, j));
                }
            }
            g_u[i] = rho * (u_t[i] + conv) - params.mu * lap
                - (params.mu + params.lambda) * grad_div
                + w * grad_p
                - w * div_stress;
        }

        // deformation residual
        let mut g_e = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut adv = 0.0;
                for k in 0..3 {
                    adv += u[k] * e_d[i][j][k];
                }
                let mut reac = 0.0;
                for k in 0..3 {
                    reac += u_d[i][k] * e[k][j];
                }
                g_e[i][j] = e_t[i][j] + adv - reac - u_d[i][j];
            }
        }
        (g_rho, g_u, g_e)
    }
}

/// Sampled forcing fields on a grid at one time.
pub fn forcing_eval(
    sol: &ManufacturedSolution,
    t: f64,
    grid: Grid,
    params: &PhysParams,
) -> Result<(ScalarField, VectorField, TensorField)> {
    sol.check_window(t)?;
    sol.check_grid(grid)?;
    let mut gr = ScalarField::zeros(grid);
    let mut gu = VectorField::zeros(grid);
    let mut ge = TensorField::zeros(grid);
    for (ix, iy, iz, idx) in grid.iter_indices() {
        let x = grid.coords(ix, iy, iz);
        let (r, u, e) = sol.forcing_at(x, t, params);
        gr.data[idx] = r;
        for c in 0..3 {
            gu.comps[c][idx] = u[c];
        }
        for i in 0..3 {
            for j in 0..3 {
                ge.comp_mut(i, j)[idx] = e[i][j];
            }
        }
    }
    Ok((gr, gu, ge))
}

/// Adapter feeding manufactured forcing into the time stepper. The run
/// window is validated up front by [`mms_run`].
pub struct MmsForcing<'a> {
    pub sol: &'a ManufacturedSolution,
    pub grid: Grid,
    pub params: PhysParams,
}

impl Forcing for MmsForcing<'_> {
    fn density(&self, t: f64) -> ScalarField {
        forcing_eval(self.sol, t, self.grid, &self.params)
            .expect("forcing window validated by the caller")
            .0
    }

    fn momentum(&self, t: f64) -> VectorField {
        forcing_eval(self.sol, t, self.grid, &self.params)
            .expect("forcing window validated by the caller")
            .1
    }

    fn deformation(&self, t: f64) -> TensorField {
        forcing_eval(self.sol, t, self.grid, &self.params)
            .expect("forcing window validated by the caller")
            .2
    }
}

/// One cell of the convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsRow {
    pub n: usize,
    pub dt: f64,
    pub err_rho: f64,
    pub err_u: f64,
    pub err_e: f64,
}

impl MmsRow {
    pub fn total(&self) -> f64 {
        (self.err_rho * self.err_rho + self.err_u * self.err_u + self.err_e * self.err_e).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<MmsRow>,
    /// log-log slope across the two finest resolutions at the smallest dt
    pub order_space: Option<f64>,
    /// log-log slope across the two smallest dts at the largest resolution
    pub order_time: Option<f64>,
}

/// March the manufactured solution on every `(n, dt)` pair and tabulate the
/// final-time errors and observed orders.
pub fn mms_run(
    sol: &ManufacturedSolution,
    resolutions: &[usize],
    dts: &[f64],
    t_end: f64,
    params: &PhysParams,
    theta: f64,
) -> Result<ConvergenceTable> {
    sol.check_window(t_end)?;
    if resolutions.is_empty() || dts.is_empty() {
        return Err(CvefError::InvalidParams(
            "mms: resolutions and dts must be nonempty".into(),
        ));
    }
    let mut rows = Vec::new();
    for &n in resolutions {
        let grid = Grid::new(
            [n, n, n],
            sol.box_lengths,
        )?;
        let mut ws = SpectralWorkspace::new(grid);
        for &dt in dts {
            let steps = (t_end / dt).round() as usize;
            let forcing = MmsForcing {
                sol,
                grid,
                params: *params,
            };
            let mut state = sol.sample_state(grid, 0.0)?;
            let popts = PicardOptions::default();
            let topts = TransportOptions::default();
            let mopts = MomentumOptions::new(theta)?;
            for i in 0..steps {
                let (mut next, _) = picard_step_forced(
                    &mut ws,
                    &state,
                    dt,
                    params,
                    &popts,
                    &topts,
                    &mopts,
                    Some(&forcing),
                )
                .map_err(|e| e.at_step(i + 1, state.t))?;
                next.t = (i + 1) as f64 * dt;
                state = next;
            }
            let exact = sol.sample_state(grid, state.t)?;
            let wq = grid.cell_volume();
            let mut sr = 0.0;
            for p in 0..grid.len() {
                let d = state.rho.data[p] - exact.rho.data[p];
                sr += d * d;
            }
            let mut su = 0.0;
            for c in 0..3 {
                for p in 0..grid.len() {
                    let d = state.u.comps[c][p] - exact.u.comps[c][p];
                    su += d * d;
                }
            }
            let mut se = 0.0;
            for c in 0..9 {
                for p in 0..grid.len() {
                    let d = state.e.comps[c][p] - exact.e.comps[c][p];
                    se += d * d;
                }
            }
            rows.push(MmsRow {
                n,
                dt,
                err_rho: (sr * wq).sqrt(),
                err_u: (su * wq).sqrt(),
                err_e: (se * wq).sqrt(),
            });
        }
    }

    let pick = |n: usize, dt: f64| -> Option<&MmsRow> {
        rows.iter().find(|r| r.n == n && r.dt == dt)
    };
    let mut sorted_n: Vec<usize> = resolutions.to_vec();
    sorted_n.sort_unstable();
    sorted_n.dedup();
    let mut sorted_dt: Vec<f64> = dts.to_vec();
    sorted_dt.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dt_min = sorted_dt[0];
    let n_max = *sorted_n.last().unwrap();

    let order_space = if sorted_n.len() >= 2 {
        let n1 = sorted_n[sorted_n.len() - 2];
        let n2 = sorted_n[sorted_n.len() - 1];
        match (pick(n1, dt_min), pick(n2, dt_min)) {
            (Some(a), Some(b)) if b.total() > 0.0 => {
                Some((a.total() / b.total()).ln() / ((n2 as f64 / n1 as f64).ln()))
            }
            _ => None,
        }
    } else {
        None
    };
    let order_time = if sorted_dt.len() >= 2 {
        let d1 = sorted_dt[sorted_dt.len() - 1];
        let d2 = sorted_dt[0];
        match (pick(n_max, d1), pick(n_max, d2)) {
            (Some(a), Some(b)) if b.total() > 0.0 => {
                Some((a.total() / b.total()).ln() / (d1 / d2).ln())
            }
            _ => None,
        }
    } else {
        None
    };
    Ok(ConvergenceTable {
        rows,
        order_space,
        order_time,
    })
}
