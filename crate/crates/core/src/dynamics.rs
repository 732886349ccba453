//! The constrained second-order vector field `Γ = y^α X_α + f^α V_α`.
//!
//! Two assemblies are provided. [`sode_accel`] solves the
//! Lagrange–d'Alembert equations written in quasivelocities, and
//! [`sode_accel_symplectic`] solves `i_Γ ω^{LD} = ε^{LD}` in the basis
//! `(X_1..X_r, V_1..V_r)` of sections of `T^D D`. They share derivative
//! evaluations but not the assembly, so each checks the other.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, Error, Result};
use crate::lagrangian::Regularity;
use crate::system::{ConstrainedState, NonholonomicSystem};

/// Components `Ω[a][b] = ω^{LD}(b_a, b_b)` in the ordered basis
/// `(X_1..X_r, V_1..V_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaLD {
    r: usize,
    matrix: DMatrix<f64>,
    pub state: ConstrainedState,
}

impl OmegaLD {
    pub fn rank(&self) -> usize {
        self.r
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `ω(X_α, X_β)`.
    pub fn xx(&self, alpha: usize, beta: usize) -> f64 {
        self.matrix[(alpha, beta)]
    }

    /// `ω(X_α, V_β)`.
    pub fn xv(&self, alpha: usize, beta: usize) -> f64 {
        self.matrix[(alpha, self.r + beta)]
    }

    /// `ω(V_α, V_β)`, zero by construction.
    pub fn vv(&self, alpha: usize, beta: usize) -> f64 {
        self.matrix[(self.r + alpha, self.r + beta)]
    }

    /// `ω(u, w)` for coefficient vectors in the `(X, V)` basis.
    pub fn pair(&self, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        (u.transpose() * &self.matrix * w)[(0, 0)]
    }

    /// Solves `i_η ω = α` for `η`, i.e. `Ωᵀ η = α`.
    pub fn contract_solve(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        let eta = self
            .matrix
            .transpose()
            .lu()
            .solve(alpha)
            .ok_or_else(|| Error::SingularSolve("contraction with ω^{LD}".into()))?;
        check_finite(eta.as_slice(), "contraction with ω^{LD}")?;
        Ok(eta)
    }
}

/// Shared per-state quantities of the quasivelocity formulas.
pub(crate) struct Pieces {
    /// `E(x)`.
    pub e: DMatrix<f64>,
    /// `∂L̃/∂x`.
    pub gx: DVector<f64>,
    /// Rows `0..r` of `∂²L̃/∂y∂x`.
    pub hyx: DMatrix<f64>,
    /// `G^{LD}`.
    pub g: DMatrix<f64>,
    /// `P[α][β] = Σ_i ∂L̃/∂y^i C^i_{αβ}`.
    pub p_c: DMatrix<f64>,
}

impl Pieces {
    pub fn at(system: &NonholonomicSystem, x: &DVector<f64>, y: &DVector<f64>) -> Result<Self> {
        let r = system.rank();
        let ql = system.quasi();
        let full = ql.on_constraint(y)?;
        let e = system.frame().checked_basis(x)?;
        let coeffs = system.frame().structure_coefficients(x)?;
        let p = ql.grad_y_full(x, &full)?;
        let gx = ql.grad_x(x, &full)?;
        let hyx = ql.hess_yx(x, &full)?.rows(0, r).into_owned();
        let g = ql.hessian_gld(x, y)?;
        let mut p_c = DMatrix::zeros(r, r);
        for a in 0..r {
            for b in (a + 1)..r {
                let v: f64 = (0..system.dim()).map(|i| p[i] * coeffs.get(i, a, b)).sum();
                p_c[(a, b)] = v;
                p_c[(b, a)] = -v;
            }
        }
        Ok(Self { e, gx, hyx, g, p_c })
    }

    /// The constrained columns `ρ_α` of the frame.
    pub fn rho(&self, r: usize) -> DMatrix<f64> {
        self.e.columns(0, r).into_owned()
    }
}

fn require_regular(system: &NonholonomicSystem, s: &ConstrainedState) -> Result<()> {
    match system.quasi().regularity_check(&s.x, &s.y)? {
        Regularity::Regular { .. } => Ok(()),
        Regularity::Degenerate { min_abs_eigenvalue } => {
            Err(Error::Degenerate { min_abs_eigenvalue })
        }
    }
}

/// Solves `G f = rhs` with a Cholesky fast path for positive definite `G`.
pub(crate) fn solve_gld(g: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let solution = match g.clone().cholesky() {
        Some(ch) => Some(ch.solve(rhs)),
        None => g.clone().lu().solve(rhs),
    };
    let f = solution.ok_or_else(|| Error::SingularSolve("G^{LD} system".into()))?;
    check_finite(f.as_slice(), "G^{LD} solve")?;
    Ok(f)
}

/// Assembles `ω^{LD}` at a state of `D`.
pub fn omega_ld(system: &NonholonomicSystem, s: &ConstrainedState) -> Result<OmegaLD> {
    s.validate(system)?;
    let pieces = Pieces::at(system, &s.x, &s.y)?;
    Ok(omega_from_pieces(system.rank(), &pieces, s))
}

pub(crate) fn omega_from_pieces(r: usize, pieces: &Pieces, s: &ConstrainedState) -> OmegaLD {
    // m[α][β] = ρ_β^i ∂²L/∂y^α∂x^i
    let m = &pieces.hyx * pieces.rho(r);
    let mut omega = DMatrix::zeros(2 * r, 2 * r);
    for a in 0..r {
        for b in (a + 1)..r {
            let v = m[(a, b)] - m[(b, a)] + pieces.p_c[(a, b)];
            omega[(a, b)] = v;
            omega[(b, a)] = -v;
        }
        for b in 0..r {
            omega[(a, r + b)] = pieces.g[(a, b)];
            omega[(r + b, a)] = -pieces.g[(a, b)];
        }
    }
    OmegaLD {
        r,
        matrix: omega,
        state: s.clone(),
    }
}

/// Components of `ε^{LD} = dE_L|_{T^D D}`: `(⟨dE, X_α⟩, ⟨dE, V_α⟩)`.
pub fn epsilon_ld(system: &NonholonomicSystem, s: &ConstrainedState) -> Result<DVector<f64>> {
    s.validate(system)?;
    let r = system.rank();
    let (dx, dy) = system.quasi().energy_gradients(&s.x, &s.y)?;
    let rho = system.frame().basis(&s.x)?.columns(0, r).into_owned();
    let mut eps = DVector::zeros(2 * r);
    eps.rows_mut(0, r).copy_from(&(rho.transpose() * dx));
    eps.rows_mut(r, r).copy_from(&dy);
    Ok(eps)
}

/// Quasivelocity accelerations `f^α` from the Lagrange–d'Alembert equations.
pub fn sode_accel(system: &NonholonomicSystem, s: &ConstrainedState) -> Result<DVector<f64>> {
    s.validate(system)?;
    require_regular(system, s)?;
    let r = system.rank();
    let pieces = Pieces::at(system, &s.x, &s.y)?;
    let rho = pieces.rho(r);
    let m = &pieces.hyx * &rho;
    // G f = ρ_α^i ∂L/∂x^i − y^β ρ_β^i ∂²L/∂y^α∂x^i − P_{αβ} y^β
    let rhs = rho.transpose() * &pieces.gx - (&m + &pieces.p_c) * &s.y;
    solve_gld(&pieces.g, &rhs)
}

/// Full coefficient vector `(y, f)` of `Γ` obtained from `i_Γ ω^{LD} = ε^{LD}`.
pub fn sode_symplectic_coefficients(
    system: &NonholonomicSystem,
    s: &ConstrainedState,
) -> Result<DVector<f64>> {
    s.validate(system)?;
    require_regular(system, s)?;
    let omega = omega_ld(system, s)?;
    let eps = epsilon_ld(system, s)?;
    omega.contract_solve(&eps)
}

/// `f^α` from the intrinsic equation `i_Γ ω^{LD} = ε^{LD}`.
pub fn sode_accel_symplectic(
    system: &NonholonomicSystem,
    s: &ConstrainedState,
) -> Result<DVector<f64>> {
    let r = system.rank();
    let eta = sode_symplectic_coefficients(system, s)?;
    Ok(eta.rows(r, r).into_owned())
}

/// `(ẋ, ẏ)` with `ẋ = ρ_α y^α`.
pub fn sode_rhs(
    system: &NonholonomicSystem,
    s: &ConstrainedState,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let ydot = sode_accel(system, s)?;
    let xdot = s.velocity(system)?;
    Ok((xdot, ydot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::DerivativeMode;
    use crate::systems::{free_particle, free_particle_accel, holonomic_plane};
    use proptest::prelude::*;

    fn st(x: &[f64], y: &[f64]) -> ConstrainedState {
        ConstrainedState::from_slices(x, y)
    }

    #[test]
    fn free_particle_omega_components() {
        let sys = free_particle();
        let w = omega_ld(&sys, &st(&[0.3, 1.0, -2.0], &[2.0, 0.7])).unwrap();
        assert!((w.xx(0, 1) - 2.0).abs() < 1e-14);
        assert!((w.xv(0, 0) - 2.0).abs() < 1e-14);
        assert!((w.xv(1, 1) - 1.0).abs() < 1e-14);
        assert_eq!(w.xv(0, 1), 0.0);
        assert_eq!(w.xv(1, 0), 0.0);
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(w.vv(a, b), 0.0);
            }
        }
    }

    #[test]
    fn free_particle_epsilon_components() {
        let sys = free_particle();
        let (x2, y1, y2) = (0.8, -1.3, 0.4);
        let eps = epsilon_ld(&sys, &st(&[1.0, x2, 2.0], &[y1, y2])).unwrap();
        let expected = [0.0, x2 * y1 * y1, (1.0 + x2 * x2) * y1, y2];
        for (e, x) in eps.iter().zip(expected) {
            assert!((e - x).abs() < 1e-14);
        }
    }

    #[test]
    fn holonomic_kinetic_has_flat_position_block() {
        let sys = holonomic_plane();
        let w = omega_ld(&sys, &st(&[1.0, -1.0, 4.0], &[0.5, 2.0])).unwrap();
        assert_eq!(w.xx(0, 1), 0.0);
        assert_eq!(w.xx(1, 0), 0.0);
    }

    #[test]
    fn free_particle_accelerations() {
        let sys = free_particle();
        let f = sode_accel(&sys, &st(&[0.0, 1.0, 0.0], &[1.0, 1.0])).unwrap();
        assert!((f - DVector::from_row_slice(&[-0.5, 0.0])).amax() < 1e-15);
        let f0 = sode_accel(&sys, &st(&[3.0, 0.0, -1.0], &[2.5, -4.0])).unwrap();
        assert!(f0.amax() < 1e-15);
        let rest = sode_accel(&sys, &st(&[3.0, 2.0, -1.0], &[0.0, 0.0])).unwrap();
        assert_eq!(rest, DVector::zeros(2));
        let rest = sode_accel_symplectic(&sys, &st(&[3.0, 2.0, -1.0], &[0.0, 0.0])).unwrap();
        assert!(rest.amax() < 1e-15);
    }

    #[test]
    fn free_particle_rhs() {
        let sys = free_particle();
        let (xdot, ydot) = sode_rhs(&sys, &st(&[0.0, 1.0, 0.0], &[1.0, 1.0])).unwrap();
        assert!((xdot - DVector::from_row_slice(&[1.0, 1.0, 1.0])).amax() < 1e-15);
        assert!((ydot - DVector::from_row_slice(&[-0.5, 0.0])).amax() < 1e-15);
        let (xdot, ydot) = sode_rhs(&sys, &st(&[0.0, 1.0, 0.0], &[0.0, 0.0])).unwrap();
        assert_eq!(xdot, DVector::zeros(3));
        assert_eq!(ydot, DVector::zeros(2));
    }

    #[test]
    fn degenerate_system_refuses_dynamics() {
        let sys = crate::systems::degenerate_plane();
        let err = sode_accel(&sys, &st(&[0.0, 0.0], &[1.0])).unwrap_err();
        assert!(matches!(err, Error::Degenerate { .. }));
        assert!(sode_accel_symplectic(&sys, &st(&[0.0, 0.0], &[1.0])).is_err());
    }

    #[test]
    fn wrong_state_size_is_rejected() {
        let sys = free_particle();
        assert!(matches!(
            sode_accel(&sys, &st(&[0.0, 1.0], &[1.0, 1.0])),
            Err(Error::Dimension(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn assemblies_agree(
            x in prop::array::uniform3(-3.0f64..3.0),
            y in prop::array::uniform2(-3.0f64..3.0),
        ) {
            let sys = free_particle();
            let s = st(&x, &y);
            let f = sode_accel(&sys, &s).unwrap();
            let g = sode_accel_symplectic(&sys, &s).unwrap();
            prop_assert!((&f - &g).amax() < 1e-8);
            prop_assert!((f - free_particle_accel(&s.x, &s.y)).amax() < 1e-10);
            // the X-part of Γ is y (second-order property)
            let eta = sode_symplectic_coefficients(&sys, &s).unwrap();
            prop_assert!((eta.rows(0, 2) - &s.y).amax() < 1e-10);
        }

        #[test]
        fn assemblies_agree_with_finite_differences(
            x in prop::array::uniform3(-2.0f64..2.0),
            y in prop::array::uniform2(-2.0f64..2.0),
        ) {
            let sys = free_particle().with_derivative_mode(DerivativeMode::FiniteDifference);
            let s = st(&x, &y);
            let f = sode_accel(&sys, &s).unwrap();
            let g = sode_accel_symplectic(&sys, &s).unwrap();
            prop_assert!((&f - &g).amax() < 1e-5);
            prop_assert!((f - free_particle_accel(&s.x, &s.y)).amax() < 1e-5);
        }

        #[test]
        fn omega_is_antisymmetric(
            x in prop::array::uniform3(-3.0f64..3.0),
            y in prop::array::uniform2(-3.0f64..3.0),
        ) {
            for sys in [free_particle(), free_particle().with_derivative_mode(DerivativeMode::FiniteDifference)] {
                let w = omega_ld(&sys, &st(&x, &y)).unwrap();
                let m = w.matrix();
                prop_assert_eq!(m + m.transpose(), DMatrix::zeros(4, 4));
            }
        }

        #[test]
        fn position_rate_satisfies_constraint(
            x in prop::array::uniform3(-3.0f64..3.0),
            y in prop::array::uniform2(-3.0f64..3.0),
        ) {
            let sys = free_particle();
            let (xdot, _) = sode_rhs(&sys, &st(&x, &y)).unwrap();
            prop_assert!((xdot[2] - x[1] * xdot[0]).abs() < 1e-14);
        }
    }
}
