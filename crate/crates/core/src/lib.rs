//! Numerical toolkit for nonholonomic Lagrangian systems written in
//! quasivelocities.
//!
//! The pieces, bottom up:
//!
//! - [`frame`]: distribution-adapted moving frames, Lie brackets and Hamel
//!   structure coefficients.
//! - [`lagrangian`]: `L̃(x, y) = L(x, E(x) y)` and its derivatives,
//!   the constrained Hessian `G^{LD}` and the energy.
//! - [`dynamics`]: `ω^{LD}`, `ε^{LD}` and the constrained second-order
//!   dynamics, assembled two ways; [`integrate`] steps it with RK4.
//! - [`hj`]: Hamilton–Jacobi residuals for candidate sections of `D`.
//! - [`complete`]: complete solutions, first integrals, and the
//!   nonholonomic bracket.
//! - [`systems`]: built-in systems and closed-form references.

// `!(a <= b)` is used on purpose so that NaN fails every guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complete;
pub mod diff;
pub mod dynamics;
pub mod error;
pub mod frame;
pub mod grid;
pub mod hj;
pub mod integrate;
pub mod lagrangian;
pub mod system;
pub mod systems;

pub use complete::{
    attach_integrals, bracket_observable, conservation_check, hamiltonian_section, involution_check,
    nonholonomic_bracket, CompleteSolution, ConservationReport, Flavor, FlavorCheck, InvolutionMode,
    InvolutionReport, ObservableOnD,
};
pub use dynamics::{
    epsilon_ld, omega_ld, sode_accel, sode_accel_symplectic, sode_rhs, sode_symplectic_coefficients,
    OmegaLD,
};
pub use error::{Error, Result};
pub use frame::{DerivativeMode, FrameField, StructureCoefficients};
pub use grid::{lattice, random_points, Bounds};
pub use hj::{
    denergy_annihilator_residual, energy_pullback, general_hj_acceleration_residual, general_hj_residual,
    restricted_hj_residual, scan_section, verify_solution_by_flow, Section, SectionFamily, SectionScan,
};
pub use integrate::{integrate, IntegrationFailure, Trajectory};
pub use lagrangian::{LagrangianDef, LagrangianDerivatives, QuasiLagrangian, Regularity};
pub use system::{ConstrainedState, NonholonomicSystem};
