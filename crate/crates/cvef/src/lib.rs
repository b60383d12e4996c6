//! Pseudo-spectral simulator and verification laboratory for the
//! three-dimensional compressible viscoelastic fluid system
//!
//! ```text
//! rho_t + div(rho u) = 0
//! rho u_t + rho (u.grad) u - mu lap u - (mu+lambda) grad div u + grad P(rho)
//!     = div(rho (I+E)(I+E)^T)
//! E_t + u.grad E = grad(u) E + grad(u)
//! ```
//!
//! on a periodic box, with `P(rho) = rho^gamma`. The time integrator is a
//! per-step fixed-point sweep: transport density and deformation against a
//! frozen velocity iterate, assemble the momentum right-hand side, then take
//! one theta-implicit step of the constant-coefficient parabolic operator.
//! The diagnostics layer evaluates the structural identities the system
//! carries (energy balance, curl compatibility of the deformation, the Piola
//! constraint, trace and mass conservation, log-density transport) and the
//! verification layer cross-checks the solver against an independent
//! finite-difference reference and manufactured solutions.

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod momentum;
pub mod picard;
pub mod spectral;
pub mod state;
pub mod transport;
pub mod verify;

pub use error::{CvefError, Result};
pub use field::{ScalarField, TensorField, VectorField};
pub use grid::Grid;
pub use spectral::SpectralWorkspace;
pub use state::{FlowState, ICSpec, PhysParams};
