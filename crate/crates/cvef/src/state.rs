//! Physical state `(rho, u, E)`, parameters, the pressure law, and an
//! initial-condition generator that builds the fields from an explicit
//! deformation map so the structural constraints hold by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CvefError, Result};
use crate::field::{ScalarField, TensorField, VectorField};
use crate::grid::Grid;
use crate::spectral::check_ellipticity;

/// Viscosities, pressure exponent and the scaling parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    /// Shear viscosity, positive.
    pub mu: f64,
    /// Second viscosity; `2 mu + 3 lambda > 0`.
    pub lambda: f64,
    /// Pressure exponent in `P(rho) = rho^gamma`, greater than one.
    pub gamma: f64,
    /// Scaling parameter; the momentum equation carries `nu^-2` on the
    /// pressure and elastic terms, and `nu = 1` is the unscaled system.
    pub nu: f64,
}

impl PhysParams {
    pub fn new(mu: f64, lambda: f64, gamma: f64, nu: f64) -> Result<Self> {
        let p = PhysParams {
            mu,
            lambda,
            gamma,
            nu,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_ellipticity(self.mu, self.lambda)?;
        if !(self.gamma > 1.0) || !self.gamma.is_finite() {
            return Err(CvefError::InvalidParams(format!(
                "params.gamma: gamma = {} must be > 1",
                self.gamma
            )));
        }
        if !(self.nu >= 1.0) || !self.nu.is_finite() {
            return Err(CvefError::InvalidParams(format!(
                "params.nu: nu = {} must be >= 1",
                self.nu
            )));
        }
        Ok(())
    }

    /// Weight on the pressure and elastic stress terms, `nu^-2`.
    #[inline]
    pub fn stress_weight(&self) -> f64 {
        1.0 / (self.nu * self.nu)
    }
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            mu: 1.0,
            lambda: 0.0,
            gamma: 2.0,
            nu: 1.0,
        }
    }
}

/// The discrete state `(rho, u, E)` at time `t`; `F = I + E`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub rho: ScalarField,
    pub u: VectorField,
    pub e: TensorField,
    pub t: f64,
}

impl FlowState {
    /// The equilibrium `rho = 1`, `u = 0`, `E = 0`.
    pub fn equilibrium(grid: Grid) -> Self {
        FlowState {
            rho: ScalarField::constant(grid, 1.0),
            u: VectorField::zeros(grid),
            e: TensorField::zeros(grid),
            t: 0.0,
        }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.rho.grid
    }
}

/// Validation report for a state; carries failures rather than erroring.
#[derive(Debug, Clone)]
pub struct StateReport {
    pub rho_min: f64,
    pub rho_max: f64,
    pub all_finite: bool,
    pub grids_consistent: bool,
}

impl StateReport {
    pub fn ok(&self) -> bool {
        self.all_finite && self.grids_consistent && self.rho_min > 0.0
    }
}

/// Scan a state for non-finite samples, density bounds and grid consistency.
pub fn validate(state: &FlowState) -> StateReport {
    StateReport {
        rho_min: state.rho.min(),
        rho_max: state.rho.max(),
        all_finite: state.rho.is_finite() && state.u.is_finite() && state.e.is_finite(),
        grids_consistent: state.u.grid == state.rho.grid && state.e.grid == state.rho.grid,
    }
}

/// Pointwise pressure `P(rho) = rho^gamma`.
pub fn pressure(rho: &ScalarField, gamma: f64) -> Result<ScalarField> {
    let min = rho.min();
    if !(min > 0.0) {
        return Err(CvefError::NonPositiveDensity { min });
    }
    Ok(ScalarField {
        grid: rho.grid,
        data: rho.data.iter().map(|r| r.powf(gamma)).collect(),
    })
}

/// Pointwise pressure potential `((rho^gamma - 1) - gamma (rho - 1)) / (gamma - 1)`.
///
/// Nonnegative by convexity, and exactly zero where `rho == 1` (the two
/// differences vanish exactly in floating point).
pub fn pressure_potential(rho: &ScalarField, gamma: f64) -> Result<ScalarField> {
    let min = rho.min();
    if !(min > 0.0) {
        return Err(CvefError::NonPositiveDensity { min });
    }
    if !(gamma > 1.0) {
        return Err(CvefError::InvalidParams(format!(
            "params.gamma: gamma = {gamma} must be > 1"
        )));
    }
    let inv = 1.0 / (gamma - 1.0);
    Ok(ScalarField {
        grid: rho.grid,
        data: rho
            .data
            .iter()
            .map(|&r| ((r.powf(gamma) - 1.0) - gamma * (r - 1.0)) * inv)
            .collect(),
    })
}

/// One trigonometric term of the displacement: `amp * trig(m . X + phase)`
/// per component, with an analytic gradient.
#[derive(Debug, Clone)]
struct DisplacementMode {
    /// Integer wavevector.
    m: [i64; 3],
    /// Amplitude per displacement component.
    amp: [f64; 3],
    /// Phase per displacement component.
    phase: [f64; 3],
}

/// Specification of the randomized, constraint-compatible initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct ICSpec {
    /// Max-norm of the displacement field.
    pub amplitude: f64,
    /// Integer wavevectors of the displacement.
    pub modes: Vec<[i64; 3]>,
    /// RNG seed for phases, direction coefficients and the velocity field.
    pub seed: u64,
    /// Max-norm of the initial velocity.
    pub velocity_amplitude: f64,
}

impl ICSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(CvefError::InvalidParams(format!(
                "ic.amplitude: {} must be >= 0",
                self.amplitude
            )));
        }
        if self.amplitude > 0.0 && self.modes.is_empty() {
            return Err(CvefError::InvalidParams(
                "ic.modes: must be nonempty when ic.amplitude > 0".into(),
            ));
        }
        if !(self.velocity_amplitude >= 0.0) || !self.velocity_amplitude.is_finite() {
            return Err(CvefError::InvalidParams(format!(
                "ic.velocity_amplitude: {} must be >= 0",
                self.velocity_amplitude
            )));
        }
        Ok(())
    }
}

impl Default for ICSpec {
    fn default() -> Self {
        ICSpec {
            amplitude: 1e-2,
            modes: vec![[1, 0, 0]],
            seed: 0,
            velocity_amplitude: 1e-2,
        }
    }
}

/// Periodic displacement built from the spec; every mode contributes a
/// per-component amplitude drawn from `[amplitude/2, amplitude)`.
struct Displacement {
    modes: Vec<DisplacementMode>,
    base: [f64; 3],
}

impl Displacement {
    fn build(spec: &ICSpec, grid: Grid, rng: &mut ChaCha8Rng) -> Self {
        let base = [
            2.0 * std::f64::consts::PI / grid.lx,
            2.0 * std::f64::consts::PI / grid.ly,
            2.0 * std::f64::consts::PI / grid.lz,
        ];
        let mut modes = Vec::with_capacity(spec.modes.len());
        for m in &spec.modes {
            let mut amp = [0.0; 3];
            let mut phase = [0.0; 3];
            for d in 0..3 {
                amp[d] = spec.amplitude * rng.gen_range(0.5..1.0);
                phase[d] = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            }
            modes.push(DisplacementMode {
                m: *m,
                amp,
                phase,
            });
        }
        Displacement { modes, base }
    }

    /// Displacement at a material point.
    fn eval(&self, xx: [f64; 3]) -> [f64; 3] {
        let mut phi = [0.0; 3];
        for mode in &self.modes {
            let arg0 = mode.m[0] as f64 * self.base[0] * xx[0]
                + mode.m[1] as f64 * self.base[1] * xx[1]
                + mode.m[2] as f64 * self.base[2] * xx[2];
            for d in 0..3 {
                phi[d] += mode.amp[d] * (arg0 + mode.phase[d]).sin();
            }
        }
        phi
    }

    /// Analytic Jacobian `d phi_d / d X_j`.
    fn grad(&self, xx: [f64; 3]) -> [[f64; 3]; 3] {
        let mut g = [[0.0; 3]; 3];
        for mode in &self.modes {
            let arg0 = mode.m[0] as f64 * self.base[0] * xx[0]
                + mode.m[1] as f64 * self.base[1] * xx[1]
                + mode.m[2] as f64 * self.base[2] * xx[2];
            for d in 0..3 {
                let c = (arg0 + mode.phase[d]).cos() * mode.amp[d];
                for j in 0..3 {
                    g[d][j] += c * mode.m[j] as f64 * self.base[j];
                }
            }
        }
        g
    }
}

fn det3(a: &[[f64; 3]; 3]) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Build a flow state from a deformation map `x = X + phi(X)`.
///
/// The Lagrangian deformation gradient `I + grad phi` is an exact Jacobian,
/// so the curl-compatibility identity holds analytically; setting
/// `rho = 1 / det F` makes `rho det F = 1` exact and the Piola constraint
/// `div(rho F^T) = 0` an identity of the map. Eulerian samples are obtained
/// by inverting the map with a damped fixed-point iteration. The sampled
/// fields are then projected onto the 2/3 band the solver evolves in, which
/// leaves the constraint residuals at the spectral-truncation level of the
/// grid rather than exactly at roundoff.
pub fn generate_ic(spec: &ICSpec, grid: Grid, params: &PhysParams) -> Result<FlowState> {
    spec.validate()?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phi = Displacement::build(spec, grid, &mut rng);

    let mut rho = ScalarField::constant(grid, 1.0);
    let mut e = TensorField::zeros(grid);

    if spec.amplitude > 0.0 {
        // invertibility scan on the material grid
        let mut min_det = f64::INFINITY;
        for (ix, iy, iz, _) in grid.iter_indices() {
            let xx = grid.coords(ix, iy, iz);
            let g = phi.grad(xx);
            let mut f = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    f[i][j] = g[i][j] + if i == j { 1.0 } else { 0.0 };
                }
            }
            min_det = min_det.min(det3(&f));
        }
        if min_det <= 0.0 {
            return Err(CvefError::MapNotInvertible { min_det });
        }

        // Eulerian fields: invert x = X + phi(X) at every grid node.
        for (ix, iy, iz, idx) in grid.iter_indices() {
            let x = grid.coords(ix, iy, iz);
            let mut xx = x;
            let mut omega = 1.0;
            let mut last_inc = f64::INFINITY;
            for _ in 0..100 {
                let p = phi.eval(xx);
                let mut inc = 0.0f64;
                let mut next = [0.0; 3];
                for d in 0..3 {
                    let target = x[d] - p[d];
                    let delta = target - xx[d];
                    next[d] = xx[d] + omega * delta;
                    inc = inc.max(delta.abs());
                }
                xx = next;
                if inc < 1e-13 {
                    break;
                }
                if inc > last_inc {
                    omega *= 0.5; // damp when the iteration overshoots
                }
                last_inc = inc;
            }
            let g = phi.grad(xx);
            let mut f = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    f[i][j] = g[i][j] + if i == j { 1.0 } else { 0.0 };
                }
            }
            let d = det3(&f);
            if d <= 0.0 {
                return Err(CvefError::MapNotInvertible { min_det: d });
            }
            rho.data[idx] = 1.0 / d;
            for i in 0..3 {
                for j in 0..3 {
                    e.comp_mut(i, j)[idx] = g[i][j];
                }
            }
        }

        // band-limit the sampled fields to the solver's dealiased space
        let mut ws = crate::spectral::SpectralWorkspace::new(grid);
        ws.dealias_scalar(&mut rho);
        for c in 0..9 {
            let mut s = ws.forward(&e.comps[c]);
            ws.apply_mask(&mut s);
            ws.inverse_into(&s, &mut e.comps[c]);
        }
        let min = rho.min();
        if !(min > 0.0) {
            return Err(CvefError::MapNotInvertible { min_det: min });
        }
    }

    // Band-limited random velocity, both solenoidal and gradient content,
    // normalized to the requested max-norm.
    let mut u = VectorField::zeros(grid);
    if spec.velocity_amplitude > 0.0 {
        let modes: Vec<[i64; 3]> = if spec.modes.is_empty() {
            vec![[1, 0, 0], [0, 1, 0], [0, 0, 1]]
        } else {
            spec.modes.clone()
        };
        let base = [
            2.0 * std::f64::consts::PI / grid.lx,
            2.0 * std::f64::consts::PI / grid.ly,
            2.0 * std::f64::consts::PI / grid.lz,
        ];
        let coeffs: Vec<([f64; 3], [f64; 3], [i64; 3])> = modes
            .iter()
            .map(|m| {
                let amp: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let ph: [f64; 3] = std::array::from_fn(|_| {
                    rng.gen_range(0.0..2.0 * std::f64::consts::PI)
                });
                (amp, ph, *m)
            })
            .collect();
        for (ix, iy, iz, idx) in grid.iter_indices() {
            let [x, y, z] = grid.coords(ix, iy, iz);
            for c in 0..3 {
                let mut v = 0.0;
                for (amp, ph, m) in &coeffs {
                    let arg =
                        m[0] as f64 * base[0] * x + m[1] as f64 * base[1] * y
                            + m[2] as f64 * base[2] * z;
                    v += amp[c] * (arg + ph[c]).sin();
                }
                u.comps[c][idx] = v;
            }
        }
        let m = u.max_abs();
        if m > 0.0 {
            u.scale(spec.velocity_amplitude / m);
        }
    }

    Ok(FlowState {
        rho,
        u,
        e,
        t: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid32() -> Grid {
        Grid::cubic(32, 2.0 * std::f64::consts::PI).unwrap()
    }

    #[test]
    fn pressure_of_unit_density_is_one() {
        let g = Grid::cubic(8, 1.0).unwrap();
        let rho = ScalarField::constant(g, 1.0);
        let p = pressure(&rho, 1.4).unwrap();
        assert!(p.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pressure_arithmetic_example() {
        let g = Grid::cubic(4, 1.0).unwrap();
        let rho = ScalarField::constant(g, 1.1);
        let p = pressure(&rho, 2.0).unwrap();
        for v in &p.data {
            assert!((v - 1.21).abs() < 1e-12);
        }
    }

    #[test]
    fn pressure_log_identity() {
        let g = Grid::cubic(8, 1.0).unwrap();
        let rho = ScalarField::from_fn(g, |x, y, z| 1.0 + 0.4 * (x + 2.0 * y - z).sin().abs());
        let p = pressure(&rho, 1.7).unwrap();
        for (r, pv) in rho.data.iter().zip(&p.data) {
            assert!((pv.ln() - 1.7 * r.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn pressure_rejects_nonpositive_density() {
        let g = Grid::cubic(4, 1.0).unwrap();
        let mut rho = ScalarField::constant(g, 1.0);
        rho.data[3] = -0.5;
        assert!(matches!(
            pressure(&rho, 2.0),
            Err(CvefError::NonPositiveDensity { .. })
        ));
    }

    #[test]
    fn potential_zero_at_equilibrium_exactly() {
        let g = Grid::cubic(4, 1.0).unwrap();
        let rho = ScalarField::constant(g, 1.0);
        let w = pressure_potential(&rho, 1.4).unwrap();
        assert!(w.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn potential_gamma_two_is_squared_deviation() {
        let g = Grid::cubic(8, 1.0).unwrap();
        let rho = ScalarField::from_fn(g, |x, _, _| 1.0 + 0.3 * x.sin());
        let w = pressure_potential(&rho, 2.0).unwrap();
        for (r, v) in rho.data.iter().zip(&w.data) {
            assert!((v - (r - 1.0) * (r - 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn potential_convexity_lower_bound() {
        // For 1 < gamma < 2 and 0 < rho < 2 the potential dominates
        // eta (rho-1)^2 with eta = gamma 2^(gamma-2) / 2.
        let gamma = 1.4;
        let eta = 0.5 * gamma * 2.0f64.powf(gamma - 2.0);
        let g = Grid::cubic(4, 1.0).unwrap();
        for &r in &[0.25, 0.5, 0.8, 1.2, 1.5, 1.9] {
            let rho = ScalarField::constant(g, r);
            let w = pressure_potential(&rho, gamma).unwrap();
            assert!(w.data[0] > 0.0);
            assert!(
                w.data[0] >= eta * (r - 1.0) * (r - 1.0) - 1e-15,
                "rho = {r}: {} < {}",
                w.data[0],
                eta * (r - 1.0) * (r - 1.0)
            );
        }
    }

    #[test]
    fn potential_nonnegative_and_monotone_pressure() {
        let g = Grid::cubic(8, 1.0).unwrap();
        let rho_a = ScalarField::from_fn(g, |x, y, _| 0.6 + 0.3 * (x * y).cos().abs());
        let rho_b = ScalarField {
            grid: g,
            data: rho_a.data.iter().map(|v| v + 0.2).collect(),
        };
        let w = pressure_potential(&rho_a, 1.66).unwrap();
        assert!(w.data.iter().all(|&v| v >= 0.0));
        let pa = pressure(&rho_a, 1.66).unwrap();
        let pb = pressure(&rho_b, 1.66).unwrap();
        assert!(pa.data.iter().zip(&pb.data).all(|(a, b)| a <= b));
    }

    #[test]
    fn ic_amplitude_zero_is_equilibrium_plus_velocity() {
        let spec = ICSpec {
            amplitude: 0.0,
            modes: vec![],
            seed: 7,
            velocity_amplitude: 0.05,
        };
        let st = generate_ic(&spec, grid32(), &PhysParams::default()).unwrap();
        assert!(st.rho.data.iter().all(|&v| v == 1.0));
        assert!(st.e.max_abs() == 0.0);
        assert!((st.u.max_abs() - 0.05).abs() < 1e-14);
    }

    #[test]
    fn ic_satisfies_rho_det_f_identity() {
        let spec = ICSpec {
            amplitude: 1e-2,
            modes: vec![[1, 0, 0]],
            seed: 1,
            velocity_amplitude: 1e-2,
        };
        let st = generate_ic(&spec, grid32(), &PhysParams::default()).unwrap();
        let mut worst = 0.0f64;
        for idx in 0..st.grid().len() {
            let mut f = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    f[i][j] = st.e.comp(i, j)[idx] + if i == j { 1.0 } else { 0.0 };
                }
            }
            worst = worst.max((st.rho.data[idx] * det3(&f) - 1.0).abs());
        }
        assert!(worst <= 1e-8, "rho det F deviation {worst:.3e}");
        let rep = validate(&st);
        assert!(rep.ok());
        assert!(rep.rho_min >= 0.5 && rep.rho_max <= 1.5);
    }

    #[test]
    fn ic_steep_large_amplitude_fails_invertibility() {
        let spec = ICSpec {
            amplitude: 0.9,
            modes: vec![[3, 0, 0]],
            seed: 3,
            velocity_amplitude: 0.0,
        };
        let err = generate_ic(&spec, grid32(), &PhysParams::default()).unwrap_err();
        assert!(matches!(err, CvefError::MapNotInvertible { .. }));
    }

    #[test]
    fn validate_flags_nan() {
        let mut st = FlowState::equilibrium(grid32());
        let rep = validate(&st);
        assert!(rep.ok() && rep.rho_min == 1.0 && rep.rho_max == 1.0);
        st.u.comps[1][5] = f64::NAN;
        assert!(!validate(&st).all_finite);
    }
}
