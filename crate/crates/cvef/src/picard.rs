//! The time loop and the per-step fixed-point iteration: transport density
//! and deformation against a frozen velocity iterate, assemble the momentum
//! right-hand side, parabolic-solve for the next velocity iterate, repeat to
//! convergence. Also the scaling transform between the unit system and the
//! `nu`-scaled variables.
//!
//! With implicitness weight `theta`, the transport velocity frozen over the
//! step is `(1-theta) u(t) + theta v_k` and the assembled force is the
//! matching combination `(1-theta) f(y_n) + theta f(y_k)`; at `theta = 1`
//! that is the plain endpoint iterate, at `theta = 1/2` the trapezoidal
//! average that makes the whole step second order in time.

use crate::diagnostics::{DiagnosticsRecord, NormSpec, EPS_FLOOR};
use crate::error::{CvefError, Result};
use crate::field::{ScalarField, TensorField, VectorField};
use crate::momentum::{
    advance_velocity_spec, assemble_rhs_with_grad, DensityLagging, MomentumOptions,
};
use crate::spectral::{Spec, SpectralWorkspace};
use crate::state::{FlowState, PhysParams};
use crate::transport::{
    advance_deformation_frozen, advance_density_frozen, FrozenVelocity, TransportOptions,
};

/// Norm used for the fixed-point iterate distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterNorm {
    L2,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    /// Relative stopping tolerance on the iterate distance.
    pub tol: f64,
    pub max_iter: usize,
    pub norm: IterNorm,
}

impl PicardOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(CvefError::InvalidParams(format!(
                "picard.tol: {} must be > 0",
                self.tol
            )));
        }
        if self.max_iter < 1 {
            return Err(CvefError::InvalidParams(
                "picard.max_iter: must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-10,
            max_iter: 50,
            norm: IterNorm::L2,
        }
    }
}

/// Convergence report of one fixed-point step.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardReport {
    pub iterations: usize,
    /// Iterate distances per sweep.
    pub distances: Vec<f64>,
    /// Contraction ratios `d_{k+1} / d_k`.
    pub ratios: Vec<f64>,
    pub converged: bool,
}

impl PicardReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().cloned().fold(0.0, f64::max)
    }
}

/// External source terms for manufactured-solution runs.
pub trait Forcing {
    fn density(&self, t: f64) -> ScalarField;
    fn momentum(&self, t: f64) -> VectorField;
    fn deformation(&self, t: f64) -> TensorField;
}

/// Full configuration of a time-marching run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Emit a diagnostics record every `stride` steps.
    pub stride: usize,
    pub picard: PicardOptions,
    pub transport: TransportOptions,
    pub momentum: MomentumOptions,
    pub norms: NormSpec,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(CvefError::InvalidParams(format!(
                "time.dt: {} must be > 0",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(CvefError::InvalidParams(format!(
                "time.t_end: {} must be >= 0",
                self.t_end
            )));
        }
        if self.stride == 0 {
            return Err(CvefError::InvalidParams(
                "output.stride: must be >= 1".into(),
            ));
        }
        self.picard.validate()?;
        self.momentum.validate()?;
        NormSpec::new(self.norms.q)?;
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dt: 1e-3,
            t_end: 1e-2,
            stride: 1,
            picard: PicardOptions::default(),
            transport: TransportOptions::default(),
            momentum: MomentumOptions::default(),
            norms: NormSpec::default(),
        }
    }
}

fn iter_norm(v: &VectorField, which: IterNorm) -> f64 {
    match which {
        IterNorm::L2 => v.norm_l2(),
        IterNorm::Linf => v.max_abs(),
    }
}

fn diff_norm(a: &VectorField, b: &VectorField, which: IterNorm) -> f64 {
    let g = a.grid;
    match which {
        IterNorm::Linf => {
            let mut m = 0.0f64;
            for c in 0..3 {
                for i in 0..g.len() {
                    m = m.max((a.comps[c][i] - b.comps[c][i]).abs());
                }
            }
            m
        }
        IterNorm::L2 => {
            let mut s = 0.0;
            for c in 0..3 {
                for i in 0..g.len() {
                    let d = a.comps[c][i] - b.comps[c][i];
                    s += d * d;
                }
            }
            (s * g.cell_volume()).sqrt()
        }
    }
}

/// Per-step context shared by every sweep.
struct StepCtx<'a> {
    state: &'a FlowState,
    params: &'a PhysParams,
    topts: &'a TransportOptions,
    mopts: &'a MomentumOptions,
    dt: f64,
    /// Force assembled from the start-of-step state.
    f_start: VectorField,
    /// Velocity gradient at the start of the step.
    grad_u_start: TensorField,
    /// Spectra of the start-of-step velocity.
    u_spec: [Spec; 3],
    /// Mean density at the start of the step.
    rho_bar_start: f64,
    /// theta-averaged external momentum force, if any.
    f_force: Option<VectorField>,
    forcing: Option<&'a dyn Forcing>,
}

struct SweepOutput {
    rho: ScalarField,
    e: TensorField,
    v_next: VectorField,
    v_next_spec: [Spec; 3],
}

impl<'a> StepCtx<'a> {
    fn build(
        ws: &mut SpectralWorkspace,
        state: &'a FlowState,
        dt: f64,
        params: &'a PhysParams,
        topts: &'a TransportOptions,
        mopts: &'a MomentumOptions,
        forcing: Option<&'a dyn Forcing>,
    ) -> Result<Self> {
        let grad_u_start = ws.jacobian(&state.u);
        let f_start = assemble_rhs_with_grad(ws, state, &grad_u_start, params, mopts)?.f;
        let u_spec = [
            ws.forward(&state.u.comps[0]),
            ws.forward(&state.u.comps[1]),
            ws.forward(&state.u.comps[2]),
        ];
        let rho_bar_start = state.rho.mean();
        let theta = mopts.theta;
        let f_force = forcing.map(|f| {
            let mut g0 = f.momentum(state.t);
            let g1 = f.momentum(state.t + dt);
            g0.scale(1.0 - theta);
            g0.axpy(theta, &g1);
            g0
        });
        Ok(StepCtx {
            state,
            params,
            topts,
            mopts,
            dt,
            f_start,
            grad_u_start,
            u_spec,
            rho_bar_start,
            f_force,
            forcing,
        })
    }

    /// One application of the fixed-point map to the iterate `v`.
    fn sweep(
        &self,
        ws: &mut SpectralWorkspace,
        v: &VectorField,
        grad_v: &TensorField,
    ) -> Result<SweepOutput> {
        let theta = self.mopts.theta;
        let n = self.state.grid().len();
        let t0 = self.state.t;

        // frozen transport velocity: (1-theta) u_n + theta v
        let (vbar, grad_vbar) = if theta == 1.0 {
            (v.clone(), grad_v.clone())
        } else {
            let mut vb = self.state.u.clone();
            vb.scale(1.0 - theta);
            vb.axpy(theta, v);
            let mut gb = self.grad_u_start.clone();
            for c in 0..9 {
                for i in 0..n {
                    gb.comps[c][i] = (1.0 - theta) * gb.comps[c][i] + theta * grad_v.comps[c][i];
                }
            }
            (vb, gb)
        };
        let fv = FrozenVelocity::from_parts(vbar, grad_vbar);

        let density_forcing = self.forcing.map(|f| move |t: f64| f.density(t));
        let rho_next = advance_density_frozen(
            ws,
            &self.state.rho,
            &fv,
            self.dt,
            self.topts,
            density_forcing
                .as_ref()
                .map(|f| f as &dyn Fn(f64) -> ScalarField),
            t0,
        )?;
        let deform_forcing = self.forcing.map(|f| move |t: f64| f.deformation(t));
        let e_next = advance_deformation_frozen(
            ws,
            &self.state.e,
            &fv,
            self.dt,
            self.topts,
            deform_forcing
                .as_ref()
                .map(|f| f as &dyn Fn(f64) -> TensorField),
            t0,
        )?;

        // endpoint force from the transported state and the iterate velocity
        let end_state = FlowState {
            rho: rho_next,
            u: v.clone(),
            e: e_next,
            t: t0 + self.dt,
        };
        let f_end =
            assemble_rhs_with_grad(ws, &end_state, grad_v, self.params, self.mopts)?.f;

        let rho_bar = match self.mopts.density_lagging {
            DensityLagging::FreezeRho => self.rho_bar_start,
            DensityLagging::RhoWeighted => end_state.rho.mean(),
        };

        // f_eff = (1-theta) f_n + theta f_k
        //       + [(1-theta)(rho_bar - rho_n) + theta (rho_bar - rho_k)] (v - u_n)/dt
        let mut f_eff = VectorField::zeros(self.state.grid());
        let inv_dt = 1.0 / self.dt;
        for c in 0..3 {
            let fs = &self.f_start.comps[c];
            let fe = &f_end.comps[c];
            let vn = &v.comps[c];
            let un = &self.state.u.comps[c];
            let out = &mut f_eff.comps[c];
            for i in 0..n {
                let lag = (1.0 - theta) * (rho_bar - self.state.rho.data[i])
                    + theta * (rho_bar - end_state.rho.data[i]);
                out[i] = (1.0 - theta) * fs[i] + theta * fe[i] + lag * (vn[i] - un[i]) * inv_dt;
            }
        }
        if let Some(ff) = &self.f_force {
            f_eff.axpy(1.0, ff);
        }

        let vstep = advance_velocity_spec(
            ws,
            &self.u_spec,
            &f_eff,
            rho_bar,
            self.dt,
            self.params,
            self.mopts,
        )?;
        Ok(SweepOutput {
            rho: end_state.rho,
            e: end_state.e,
            v_next: vstep.u,
            v_next_spec: vstep.spec,
        })
    }
}

/// One time step of the decoupled fixed-point iteration.
pub fn picard_step(
    ws: &mut SpectralWorkspace,
    state: &FlowState,
    dt: f64,
    params: &PhysParams,
    popts: &PicardOptions,
    topts: &TransportOptions,
    mopts: &MomentumOptions,
) -> Result<(FlowState, PicardReport)> {
    picard_step_forced(ws, state, dt, params, popts, topts, mopts, None)
}

#[allow(clippy::too_many_arguments)]
pub fn picard_step_forced(
    ws: &mut SpectralWorkspace,
    state: &FlowState,
    dt: f64,
    params: &PhysParams,
    popts: &PicardOptions,
    topts: &TransportOptions,
    mopts: &MomentumOptions,
    forcing: Option<&dyn Forcing>,
) -> Result<(FlowState, PicardReport)> {
    popts.validate()?;
    mopts.validate()?;
    params.validate()?;
    let ctx = StepCtx::build(ws, state, dt, params, topts, mopts, forcing)?;

    let mut v = state.u.clone();
    let mut grad_v = ctx.grad_u_start.clone();
    let mut distances: Vec<f64> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();

    for k in 0..popts.max_iter {
        let out = match ctx.sweep(ws, &v, &grad_v) {
            Ok(o) => o,
            Err(CvefError::CflViolation { .. }) if k > 0 => {
                // the iterate blew past the stability bound: a divergence
                // signal, not a property of the incoming data
                return Err(CvefError::NonConvergence {
                    iterations: k,
                    last_distance: distances.last().copied().unwrap_or(f64::INFINITY),
                });
            }
            Err(e) => return Err(e),
        };
        let dist = diff_norm(&out.v_next, &v, popts.norm);
        if let Some(&prev) = distances.last() {
            if prev > 0.0 {
                ratios.push(dist / prev);
            }
        }
        distances.push(dist);
        let denom = iter_norm(&out.v_next, popts.norm).max(EPS_FLOOR);
        if dist <= popts.tol * denom {
            let next = FlowState {
                rho: out.rho,
                e: out.e,
                u: out.v_next,
                t: state.t + dt,
            };
            return Ok((
                next,
                PicardReport {
                    iterations: k + 1,
                    distances,
                    ratios,
                    converged: true,
                },
            ));
        }
        if k >= 2 && dist > 10.0 * distances[0] && dist > distances[k - 1] {
            return Err(CvefError::NonConvergence {
                iterations: k + 1,
                last_distance: dist,
            });
        }
        grad_v = ws.jacobian_of_specs(&[
            &out.v_next_spec[0],
            &out.v_next_spec[1],
            &out.v_next_spec[2],
        ]);
        v = out.v_next;
    }
    Err(CvefError::NonConvergence {
        iterations: popts.max_iter,
        last_distance: distances.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Apply the fixed-point map once to an arbitrary iterate (used to check
/// the accepted fixed point: one extra application must move the velocity
/// by at most the stopping tolerance).
pub fn fixed_point_map(
    ws: &mut SpectralWorkspace,
    state: &FlowState,
    v: &VectorField,
    dt: f64,
    params: &PhysParams,
    topts: &TransportOptions,
    mopts: &MomentumOptions,
) -> Result<VectorField> {
    let ctx = StepCtx::build(ws, state, dt, params, topts, mopts, None)?;
    let grad_v = ws.jacobian(v);
    Ok(ctx.sweep(ws, v, &grad_v)?.v_next)
}

// ------------------------------------------------------------------- run

pub trait DiagnosticsSink {
    fn emit(&mut self, rec: &DiagnosticsRecord) -> Result<()>;
}

pub trait SnapshotSink {
    fn emit(&mut self, state: &FlowState) -> Result<()>;
}

/// Collects records in memory.
#[derive(Default)]
pub struct MemorySink {
    pub records: Vec<DiagnosticsRecord>,
}

impl DiagnosticsSink for MemorySink {
    fn emit(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        self.records.push(rec.clone());
        Ok(())
    }
}

/// Discards snapshots.
pub struct NullSnapshots;

impl SnapshotSink for NullSnapshots {
    fn emit(&mut self, _state: &FlowState) -> Result<()> {
        Ok(())
    }
}

/// March `initial` to `t_end`, emitting a diagnostics record at `t = 0`,
/// every `stride` steps and at the final step, and a snapshot at the start
/// and end. Deterministic: identical config and state reproduce the
/// identical record stream.
pub fn run(
    ws: &mut SpectralWorkspace,
    cfg: &RunConfig,
    params: &PhysParams,
    initial: &FlowState,
    diag: &mut dyn DiagnosticsSink,
    snaps: &mut dyn SnapshotSink,
) -> Result<FlowState> {
    run_forced(ws, cfg, params, initial, diag, snaps, None)
}

#[allow(clippy::too_many_arguments)]
pub fn run_forced(
    ws: &mut SpectralWorkspace,
    cfg: &RunConfig,
    params: &PhysParams,
    initial: &FlowState,
    diag: &mut dyn DiagnosticsSink,
    snaps: &mut dyn SnapshotSink,
    forcing: Option<&dyn Forcing>,
) -> Result<FlowState> {
    cfg.validate()?;
    params.validate()?;

    let mut rec0 = DiagnosticsRecord::compute(ws, initial, params, &cfg.norms)?;
    let e0_bal = rec0.balance_energy(params);
    rec0.diss_cum = 0.0;
    rec0.balance_res = 0.0;
    diag.emit(&rec0)?;
    snaps.emit(initial)?;

    let n_steps = (cfg.t_end / cfg.dt).round() as usize;
    let mut state = initial.clone();
    let mut rate_prev = rec0.diss_rate;
    let mut diss_cum = 0.0;
    let t0 = initial.t;

    for i in 0..n_steps {
        let (mut next, report) = picard_step_forced(
            ws,
            &state,
            cfg.dt,
            params,
            &cfg.picard,
            &cfg.transport,
            &cfg.momentum,
            forcing,
        )
        .map_err(|e| e.at_step(i + 1, state.t))?;
        next.t = t0 + (i + 1) as f64 * cfg.dt;
        let rate = crate::diagnostics::dissipation_rate(ws, &next.u, params);
        diss_cum += 0.5 * cfg.dt * (rate_prev + rate);
        rate_prev = rate;
        state = next;

        if (i + 1) % cfg.stride == 0 || i + 1 == n_steps {
            let mut rec = DiagnosticsRecord::compute(ws, &state, params, &cfg.norms)
                .map_err(|e| e.at_step(i + 1, state.t))?;
            rec.diss_rate = rate;
            rec.diss_cum = diss_cum;
            rec.balance_res =
                (rec.balance_energy(params) + diss_cum - e0_bal).abs() / e0_bal.max(EPS_FLOOR);
            rec.picard_iters = report.iterations;
            rec.picard_ratio_max = report.max_ratio();
            diag.emit(&rec)?;
        }
    }
    snaps.emit(&state)?;
    Ok(state)
}

// ------------------------------------------------------------- scaling

/// Push a state to the scaled variables `y = nu x`, `s = nu^2 t`,
/// `v = u / nu`: the box stretches by `nu`, samples stay in place.
pub fn scale_state(state: &FlowState, nu: f64) -> Result<FlowState> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(CvefError::InvalidParams(format!(
            "params.nu: {nu} must be > 0"
        )));
    }
    let g = state.grid().rescaled(nu);
    let mut out = FlowState {
        rho: ScalarField {
            grid: g,
            data: state.rho.data.clone(),
        },
        u: VectorField {
            grid: g,
            comps: state.u.comps.clone(),
        },
        e: TensorField {
            grid: g,
            comps: state.e.comps.clone(),
        },
        t: state.t * nu * nu,
    };
    out.u.scale(1.0 / nu);
    Ok(out)
}

/// Exact inverse of [`scale_state`].
pub fn unscale_state(state: &FlowState, nu: f64) -> Result<FlowState> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(CvefError::InvalidParams(format!(
            "params.nu: {nu} must be > 0"
        )));
    }
    let g = state.grid().rescaled(1.0 / nu);
    let mut out = FlowState {
        rho: ScalarField {
            grid: g,
            data: state.rho.data.clone(),
        },
        u: VectorField {
            grid: g,
            comps: state.u.comps.clone(),
        },
        e: TensorField {
            grid: g,
            comps: state.e.comps.clone(),
        },
        t: state.t / (nu * nu),
    };
    out.u.scale(nu);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::state::{generate_ic, ICSpec};

    const PI: f64 = std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::cubic(n, 2.0 * PI).unwrap()
    }

    fn small_ic(g: Grid, amplitude: f64, seed: u64) -> FlowState {
        let spec = ICSpec {
            amplitude,
            modes: vec![[1, 0, 0], [0, 1, 1]],
            seed,
            velocity_amplitude: amplitude,
        };
        generate_ic(&spec, g, &PhysParams::default()).unwrap()
    }

    #[test]
    fn equilibrium_converges_in_one_sweep_exactly() {
        let g = grid(8);
        let mut ws = SpectralWorkspace::new(g);
        let state = FlowState::equilibrium(g);
        let (next, report) = picard_step(
            &mut ws,
            &state,
            1e-3,
            &PhysParams::default(),
            &PicardOptions::default(),
            &TransportOptions::default(),
            &MomentumOptions::default(),
        )
        .unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.converged);
        assert_eq!(next.rho, state.rho);
        assert_eq!(next.u, state.u);
        assert_eq!(next.e, state.e);
    }

    #[test]
    fn equilibrium_run_is_machine_exact() {
        let g = grid(8);
        let mut ws = SpectralWorkspace::new(g);
        let state = FlowState::equilibrium(g);
        let cfg = RunConfig {
            dt: 1e-3,
            t_end: 0.05,
            stride: 10,
            ..Default::default()
        };
        let mut sink = MemorySink::default();
        let fin = run(
            &mut ws,
            &cfg,
            &PhysParams::default(),
            &state,
            &mut sink,
            &mut NullSnapshots,
        )
        .unwrap();
        assert_eq!(fin.rho, state.rho);
        assert_eq!(fin.u, state.u);
        assert_eq!(fin.e, state.e);
        for rec in &sink.records {
            assert!(rec.balance_res <= 1e-12);
            assert!(rec.curl_linf <= 1e-12);
            assert!(rec.piola_l2 <= 1e-12);
            assert_eq!(rec.rho_min, 1.0);
            assert_eq!(rec.rho_max, 1.0);
        }
    }

    #[test]
    fn zero_step_run_returns_initial_with_one_record() {
        let g = grid(8);
        let mut ws = SpectralWorkspace::new(g);
        let state = small_ic(g, 1e-3, 5);
        let cfg = RunConfig {
            dt: 1e-3,
            t_end: 0.0,
            ..Default::default()
        };
        let mut sink = MemorySink::default();
        let fin = run(
            &mut ws,
            &cfg,
            &PhysParams::default(),
            &state,
            &mut sink,
            &mut NullSnapshots,
        )
        .unwrap();
        assert_eq!(sink.records.len(), 1);
        assert_eq!(fin, state);
    }

    #[test]
    fn small_data_step_contracts() {
        let g = grid(16);
        let mut ws = SpectralWorkspace::new(g);
        let state = small_ic(g, 1e-2, 7);
        let (_, report) = picard_step(
            &mut ws,
            &state,
            1e-3,
            &PhysParams::default(),
            &PicardOptions::default(),
            &TransportOptions::default(),
            &MomentumOptions::default(),
        )
        .unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 50);
        for r in &report.ratios {
            assert!(*r < 1.0, "ratio {r} not contractive");
        }
    }

    #[test]
    fn accepted_iterate_is_a_fixed_point_within_tolerance() {
        let g = grid(16);
        let mut ws = SpectralWorkspace::new(g);
        let state = small_ic(g, 1e-2, 3);
        let popts = PicardOptions::default();
        let (next, _) = picard_step(
            &mut ws,
            &state,
            1e-3,
            &PhysParams::default(),
            &popts,
            &TransportOptions::default(),
            &MomentumOptions::default(),
        )
        .unwrap();
        let mapped = fixed_point_map(
            &mut ws,
            &state,
            &next.u,
            1e-3,
            &PhysParams::default(),
            &TransportOptions::default(),
            &MomentumOptions::default(),
        )
        .unwrap();
        let residual = diff_norm(&mapped, &next.u, popts.norm);
        let scale = iter_norm(&next.u, popts.norm);
        assert!(
            residual <= popts.tol * scale.max(EPS_FLOOR) * 1.5,
            "fixed-point residual {residual:.3e} vs tol {:.3e}",
            popts.tol * scale
        );
    }

    #[test]
    fn large_amplitude_large_dt_fails_to_converge() {
        // data decisively outside the small-density-deviation regime,
        // stepped 100x too coarsely: the sweep map stops contracting
        let g = grid(32);
        let mut ws = SpectralWorkspace::new(g);
        let spec = ICSpec {
            amplitude: 0.1,
            modes: vec![
                [1, 0, 0],
                [0, 1, 1],
                [1, 1, 0],
                [0, 0, 1],
                [1, 0, 1],
                [1, 1, 1],
                [2, 1, 0],
            ],
            seed: 28,
            velocity_amplitude: 0.1,
        };
        let state = generate_ic(&spec, g, &PhysParams::default()).unwrap();
        let err = picard_step(
            &mut ws,
            &state,
            0.1,
            &PhysParams::default(),
            &PicardOptions::default(),
            &TransportOptions::default(),
            &MomentumOptions::new(0.5).unwrap(),
        );
        match err {
            Err(CvefError::NonConvergence { .. }) => {}
            Ok((_, rep)) => panic!(
                "expected NonConvergence, converged in {} sweeps (max ratio {:.3})",
                rep.iterations,
                rep.max_ratio()
            ),
            Err(other) => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let g = grid(8);
        let state = small_ic(g, 5e-3, 13);
        let cfg = RunConfig {
            dt: 2e-3,
            t_end: 1e-2,
            ..Default::default()
        };
        let go = || {
            let mut ws = SpectralWorkspace::new(g);
            let mut sink = MemorySink::default();
            let fin = run(
                &mut ws,
                &cfg,
                &PhysParams::default(),
                &state,
                &mut sink,
                &mut NullSnapshots,
            )
            .unwrap();
            (fin, sink.records)
        };
        let (fa, ra) = go();
        let (fb, rb) = go();
        assert_eq!(fa, fb);
        assert_eq!(ra, rb);
    }

    #[test]
    fn scaling_roundtrip_is_exact_for_power_of_two() {
        let g = grid(8);
        let state = small_ic(g, 1e-2, 1);
        let s1 = scale_state(&state, 1.0).unwrap();
        assert_eq!(s1, state);
        let s2 = scale_state(&state, 2.0).unwrap();
        let back = unscale_state(&s2, 2.0).unwrap();
        assert_eq!(back, state);
        assert_eq!(s2.grid().lx, 2.0 * state.grid().lx);
    }

    #[test]
    fn scaled_and_direct_runs_agree_after_unscaling() {
        let g = grid(16);
        let state = small_ic(g, 1e-2, 9);
        let nu = 2.0;
        let params1 = PhysParams::default();
        let cfg1 = RunConfig {
            dt: 1e-3,
            t_end: 5e-3,
            ..Default::default()
        };
        let mut ws = SpectralWorkspace::new(g);
        let direct = run(
            &mut ws,
            &cfg1,
            &params1,
            &state,
            &mut MemorySink::default(),
            &mut NullSnapshots,
        )
        .unwrap();

        let scaled0 = scale_state(&state, nu).unwrap();
        let params2 = PhysParams {
            nu,
            ..PhysParams::default()
        };
        let cfg2 = RunConfig {
            dt: nu * nu * cfg1.dt,
            t_end: nu * nu * cfg1.t_end,
            ..cfg1.clone()
        };
        let mut ws2 = SpectralWorkspace::new(scaled0.grid());
        let scaled = run(
            &mut ws2,
            &cfg2,
            &params2,
            &scaled0,
            &mut MemorySink::default(),
            &mut NullSnapshots,
        )
        .unwrap();
        let back = unscale_state(&scaled, nu).unwrap();

        let mut worst = 0.0f64;
        for i in 0..g.len() {
            worst = worst.max((back.rho.data[i] - direct.rho.data[i]).abs());
        }
        for c in 0..3 {
            for i in 0..g.len() {
                worst = worst.max((back.u.comps[c][i] - direct.u.comps[c][i]).abs());
            }
        }
        for c in 0..9 {
            for i in 0..g.len() {
                worst = worst.max((back.e.comps[c][i] - direct.e.comps[c][i]).abs());
            }
        }
        assert!(worst < 1e-11, "scaling discrepancy {worst:.3e}");
        assert!((back.t - direct.t).abs() < 1e-14);
    }

    #[test]
    fn zeroed_elastic_term_breaks_energy_balance() {
        // fault injection: the balance residual must detect a solver with
        // the elastic stress disabled, at the square of the amplitude
        let g = grid(16);
        let amp = 1e-2;
        let state = small_ic(g, amp, 21);
        let cfg_ok = RunConfig {
            dt: 1e-3,
            t_end: 2e-2,
            momentum: MomentumOptions::new(0.5).unwrap(),
            ..Default::default()
        };
        let mut broken_m = cfg_ok.momentum;
        broken_m.skip_elastic = true;
        let cfg_broken = RunConfig {
            momentum: broken_m,
            ..cfg_ok.clone()
        };
        let runner = |cfg: &RunConfig| {
            let mut ws = SpectralWorkspace::new(g);
            let mut sink = MemorySink::default();
            run(
                &mut ws,
                cfg,
                &PhysParams::default(),
                &state,
                &mut sink,
                &mut NullSnapshots,
            )
            .unwrap();
            sink.records.last().unwrap().balance_res
        };
        let res_ok = runner(&cfg_ok);
        let res_broken = runner(&cfg_broken);
        assert!(
            res_broken > 20.0 * res_ok,
            "fault not detected: ok {res_ok:.3e} broken {res_broken:.3e}"
        );
        // the broken residual reflects the O(amp^2) elastic energy exchange
        assert!(res_broken > 1e-6);
    }
}
