//! Complete solutions, their first integrals, and the nonholonomic bracket.
//!
//! A complete solution is an `r`-parameter family `σ_λ` for which
//! `Φ(x, λ) = (x, σ_λ(x))` is a local diffeomorphism `Q × Λ → D`. The
//! parameter part of `Φ^{-1}` is a map `F: D → R^r` whose components are
//! constants of motion.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::diff;
use crate::dynamics::omega_ld;
use crate::error::{check_finite, Error, Result};
use crate::frame::DerivativeMode;
use crate::hj::{scan_section, SectionFamily};
use crate::integrate::{integrate, Trajectory};
use crate::lagrangian::Regularity;
use crate::system::{ConstrainedState, NonholonomicSystem};

/// Round-trip tolerance for `F(x, σ_λ(x)) = λ`.
pub const ROUND_TRIP_TOLERANCE: f64 = 1e-8;
/// `|det ∂σ/∂λ|` below this is treated as a failure of the local diffeomorphism property.
pub const DIFFEO_TOLERANCE: f64 = 1e-12;
/// Newton solve for `λ` when no closed-form inverse is registered.
pub const NEWTON_MAX_ITERATIONS: usize = 50;
pub const NEWTON_TOLERANCE: f64 = 1e-12;

pub type PhaseScalarFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
pub type PhaseGradientFn =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync>;

/// A smooth function `g(x, y)` on `D`.
#[derive(Clone)]
pub struct ObservableOnD {
    value: PhaseScalarFn,
    gradient: Option<PhaseGradientFn>,
    mode: DerivativeMode,
}

impl fmt::Debug for ObservableOnD {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObservableOnD")
            .field("analytic_gradient", &self.gradient.is_some())
            .field("mode", &self.mode)
            .finish()
    }
}

impl ObservableOnD {
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            gradient: None,
            mode: DerivativeMode::Analytic,
        }
    }

    /// Registers `(x, y) ↦ (∂g/∂x, ∂g/∂y)`.
    pub fn with_gradient<G>(mut self, gradient: G) -> Self
    where
        G: Fn(&DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_derivative_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| c)
            .with_gradient(|x, y| (DVector::zeros(x.len()), DVector::zeros(y.len())))
    }

    /// The coordinate function `x^i`.
    pub fn position(i: usize) -> Self {
        Self::new(move |x, _| x[i]).with_gradient(move |x, y| {
            let mut gx = DVector::zeros(x.len());
            gx[i] = 1.0;
            (gx, DVector::zeros(y.len()))
        })
    }

    /// The coordinate function `y^α`.
    pub fn quasivelocity(alpha: usize) -> Self {
        Self::new(move |_, y| y[alpha]).with_gradient(move |x, y| {
            let mut gy = DVector::zeros(y.len());
            gy[alpha] = 1.0;
            (DVector::zeros(x.len()), gy)
        })
    }

    /// `E_L` restricted to `D`.
    pub fn energy(system: Arc<NonholonomicSystem>) -> Self {
        let s = system.clone();
        Self::new(move |x, y| s.quasi().energy(x, y).unwrap_or(f64::NAN)).with_gradient(move |x, y| {
            system
                .quasi()
                .energy_gradients(x, y)
                .unwrap_or_else(|_| (DVector::from_element(x.len(), f64::NAN), DVector::from_element(y.len(), f64::NAN)))
        })
    }

    pub fn scaled(&self, k: f64) -> Self {
        let value = self.value.clone();
        let gradient = self.gradient.clone().map(|g| -> PhaseGradientFn {
            Arc::new(move |x: &DVector<f64>, y: &DVector<f64>| {
                let (gx, gy) = g(x, y);
                (gx * k, gy * k)
            })
        });
        Self {
            value: Arc::new(move |x, y| k * value(x, y)),
            gradient,
            mode: self.mode,
        }
    }

    pub fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        let v = (self.value)(x, y);
        check_finite(&[v], "observable value")?;
        Ok(v)
    }

    /// `(∂g/∂x, ∂g/∂y)`.
    pub fn gradients(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let (gx, gy) = match (&self.gradient, self.mode) {
            (Some(g), DerivativeMode::Analytic) => g(x, y),
            _ => (
                diff::gradient(|p| (self.value)(p, y), x, diff::FIRST_STEP),
                diff::gradient(|q| (self.value)(x, q), y, diff::FIRST_STEP),
            ),
        };
        check_finite(gx.as_slice(), "observable gradient")?;
        check_finite(gy.as_slice(), "observable gradient")?;
        Ok((gx, gy))
    }

    /// `δg = dg|_{T^D D}` in the basis `(X_α, V_α)`:
    /// `(ρ_α^i ∂g/∂x^i, ∂g/∂y^α)`.
    pub fn restricted_differential(
        &self,
        system: &NonholonomicSystem,
        s: &ConstrainedState,
    ) -> Result<DVector<f64>> {
        let r = system.rank();
        let (gx, gy) = self.gradients(&s.x, &s.y)?;
        let rho = system.frame().basis(&s.x)?.columns(0, r).into_owned();
        let mut d = DVector::zeros(2 * r);
        d.rows_mut(0, r).copy_from(&(rho.transpose() * gx));
        d.rows_mut(r, r).copy_from(&gy);
        Ok(d)
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

/// Coefficients of the nonholonomic Hamiltonian section `η_g`, defined by
/// `i_{η_g} ω^{LD} = δg`, in the basis `(X_α, V_α)`.
pub fn hamiltonian_section(
    system: &NonholonomicSystem,
    g: &ObservableOnD,
    s: &ConstrainedState,
) -> Result<DVector<f64>> {
    s.validate(system)?;
    require_regular(system, s)?;
    let omega = omega_ld(system, s)?;
    omega.contract_solve(&g.restricted_differential(system, s)?)
}

/// `{f, g}^{nh} = ω^{LD}(η_f, η_g)`.
pub fn nonholonomic_bracket(
    system: &NonholonomicSystem,
    f: &ObservableOnD,
    g: &ObservableOnD,
    s: &ConstrainedState,
) -> Result<f64> {
    s.validate(system)?;
    require_regular(system, s)?;
    let omega = omega_ld(system, s)?;
    let eta_f = omega.contract_solve(&f.restricted_differential(system, s)?)?;
    let eta_g = omega.contract_solve(&g.restricted_differential(system, s)?)?;
    Ok(omega.pair(&eta_f, &eta_g))
}

/// `{f, g}^{nh}` as an observable in its own right, with finite-difference
/// derivatives.
pub fn bracket_observable(
    system: Arc<NonholonomicSystem>,
    f: ObservableOnD,
    g: ObservableOnD,
) -> ObservableOnD {
    ObservableOnD::new(move |x, y| {
        let s = ConstrainedState::new(x.clone(), y.clone());
        nonholonomic_bracket(&system, &f, &g, &s).unwrap_or(f64::NAN)
    })
}

/// Which Hamilton–Jacobi problem a family solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    General,
    Restricted,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::General => "general",
            Flavor::Restricted => "restricted",
        })
    }
}

pub type InverseFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// `(x, y) ↦ (∂F/∂x, ∂F/∂y)` as `r × n` and `r × r` matrices.
pub type InverseJacobianFn =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync>;

#[derive(Clone)]
pub struct CompleteSolution {
    family: SectionFamily,
    inverse: Option<InverseFn>,
    inverse_jacobian: Option<InverseJacobianFn>,
    flavor: Flavor,
}

impl fmt::Debug for CompleteSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompleteSolution")
            .field("family", &self.family)
            .field("closed_form_inverse", &self.inverse.is_some())
            .field("flavor", &self.flavor)
            .finish()
    }
}

/// Outcome of [`CompleteSolution::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletenessReport {
    pub max_round_trip_error: f64,
    /// Smallest `|det ∂σ/∂λ|` seen.
    pub min_abs_parameter_det: f64,
}

/// Outcome of [`CompleteSolution::verify_flavor`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlavorCheck {
    pub claimed: Flavor,
    pub verified: Flavor,
    pub max_general: f64,
    pub max_restricted: f64,
    pub max_denergy: f64,
    /// Largest variance of `σ_λ*E_L` over the points, across parameter values.
    pub max_energy_variance: f64,
    /// The family does not even solve the general problem.
    pub general_fails: bool,
    pub warning: Option<String>,
}

impl CompleteSolution {
    pub fn new(family: SectionFamily, flavor: Flavor) -> Self {
        Self {
            family,
            inverse: None,
            inverse_jacobian: None,
            flavor,
        }
    }

    /// Registers a closed-form `F`.
    pub fn with_inverse<F>(mut self, inverse: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    pub fn with_inverse_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync + 'static,
    {
        self.inverse_jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn family(&self) -> &SectionFamily {
        &self.family
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn rank(&self) -> usize {
        self.family.rank()
    }

    /// `σ_λ(x)`.
    pub fn sigma(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        self.family.value(x, lambda)
    }

    /// `F(x, y)`: the parameters of the leaf through `(x, y)`.
    pub fn invert(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.inverse {
            Some(inv) => {
                let l = inv(x, y);
                check_finite(l.as_slice(), "inverse map")?;
                Ok(l)
            }
            None => self.newton_invert(x, y),
        }
    }

    /// Solves `σ_λ(x) = y` for `λ` by damped Newton iteration from `λ = 0`.
    pub fn newton_invert(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let r = self.rank();
        let mut lambda = DVector::zeros(r);
        let mut res = self.family.value(x, &lambda)? - y;
        let scale = y.amax().max(1.0);
        for _ in 0..NEWTON_MAX_ITERATIONS {
            if res.amax() <= NEWTON_TOLERANCE * scale {
                return Ok(lambda);
            }
            let jac = self.family.jacobian_lambda(x, &lambda)?;
            let step = jac
                .lu()
                .solve(&res)
                .ok_or_else(|| Error::InvalidCompleteSolution("singular ∂σ/∂λ in Newton solve".into()))?;
            let mut damping = 1.0;
            loop {
                let trial = &lambda - &step * damping;
                let trial_res = self.family.value(x, &trial)? - y;
                if trial_res.norm() < res.norm() || damping < 1e-6 {
                    lambda = trial;
                    res = trial_res;
                    break;
                }
                damping *= 0.5;
            }
        }
        if res.amax() <= NEWTON_TOLERANCE * scale {
            Ok(lambda)
        } else {
            Err(Error::InvalidCompleteSolution(format!(
                "Newton inversion did not converge (residual {:e})",
                res.amax()
            )))
        }
    }

    /// Checks the round trip `F(x, σ_λ(x)) = λ` and nonsingularity of
    /// `∂σ/∂λ` at each `(x, λ)` sample.
    pub fn validate(&self, samples: &[(DVector<f64>, DVector<f64>)]) -> Result<CompletenessReport> {
        let mut report = CompletenessReport {
            max_round_trip_error: 0.0,
            min_abs_parameter_det: f64::INFINITY,
        };
        for (x, lambda) in samples {
            let y = self.sigma(x, lambda)?;
            let back = self.invert(x, &y)?;
            let err = (back - lambda).amax();
            report.max_round_trip_error = report.max_round_trip_error.max(err);
            if !(err <= ROUND_TRIP_TOLERANCE) {
                return Err(Error::InvalidCompleteSolution(format!(
                    "round trip F(x, σ_λ(x)) = λ fails by {err:e} at x = {:?}, λ = {:?}",
                    x.as_slice(),
                    lambda.as_slice()
                )));
            }
            let det = self.family.jacobian_lambda(x, lambda)?.determinant().abs();
            report.min_abs_parameter_det = report.min_abs_parameter_det.min(det);
            if !(det > DIFFEO_TOLERANCE) {
                return Err(Error::InvalidCompleteSolution(format!(
                    "∂σ/∂λ is singular at x = {:?}, λ = {:?}",
                    x.as_slice(),
                    lambda.as_slice()
                )));
            }
        }
        Ok(report)
    }

    /// `(∂F/∂x, ∂F/∂y)` at a point of `D`, from the registered closed form or
    /// the implicit function theorem applied to `σ_λ(x) = y`.
    pub fn inverse_jacobian(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if let Some(j) = &self.inverse_jacobian {
            let (jx, jy) = j(x, y);
            check_finite(jx.as_slice(), "inverse Jacobian")?;
            check_finite(jy.as_slice(), "inverse Jacobian")?;
            return Ok((jx, jy));
        }
        let lambda = self.invert(x, y)?;
        let jl = self.family.jacobian_lambda(x, &lambda)?;
        let jy = jl
            .try_inverse()
            .ok_or_else(|| Error::InvalidCompleteSolution("singular ∂σ/∂λ".into()))?;
        let jx = -(&jy * self.family.jacobian_x(x, &lambda)?);
        Ok((jx, jy))
    }

    fn integral(&self, i: usize) -> ObservableOnD {
        let (value_cs, grad_cs) = (self.clone(), self.clone());
        ObservableOnD::new(move |x, y| value_cs.invert(x, y).map(|l| l[i]).unwrap_or(f64::NAN)).with_gradient(
            move |x, y| match grad_cs.inverse_jacobian(x, y) {
                Ok((jx, jy)) => (jx.row(i).transpose(), jy.row(i).transpose()),
                Err(_) => (
                    DVector::from_element(x.len(), f64::NAN),
                    DVector::from_element(y.len(), f64::NAN),
                ),
            },
        )
    }

    /// The components `f_i` of `F`, after validating the family on `samples`.
    pub fn first_integrals(&self, samples: &[(DVector<f64>, DVector<f64>)]) -> Result<Vec<ObservableOnD>> {
        self.validate(samples)?;
        Ok((0..self.rank()).map(|i| self.integral(i)).collect())
    }

    /// `det[∂f_i/∂y^β]`, the transversality determinant of the integrals.
    pub fn transversality(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        Ok(self.inverse_jacobian(x, y)?.1.determinant())
    }

    /// Re-checks the claimed flavor on `points × lambdas`. A restricted claim
    /// that fails the restricted residuals is downgraded to general.
    pub fn verify_flavor(
        &mut self,
        system: &NonholonomicSystem,
        points: &[DVector<f64>],
        lambdas: &[DVector<f64>],
        tol: f64,
    ) -> Result<FlavorCheck> {
        let mut check = FlavorCheck {
            claimed: self.flavor,
            verified: self.flavor,
            max_general: 0.0,
            max_restricted: 0.0,
            max_denergy: 0.0,
            max_energy_variance: 0.0,
            general_fails: false,
            warning: None,
        };
        for lambda in lambdas {
            let scan = scan_section(system, &self.family.at(lambda), points)?;
            check.max_general = check.max_general.max(scan.max_general);
            check.max_restricted = check.max_restricted.max(scan.max_restricted);
            check.max_denergy = check.max_denergy.max(scan.max_denergy);
            check.max_energy_variance = check.max_energy_variance.max(scan.energy_variance);
        }
        check.general_fails = !(check.max_general <= tol);
        let restricted_ok = !check.general_fails && check.max_restricted <= tol && check.max_denergy <= tol;
        if self.flavor == Flavor::Restricted && !restricted_ok {
            check.verified = Flavor::General;
            check.warning = Some(format!(
                "claimed restricted but restricted residual is {:e} (denergy {:e}); downgraded to general",
                check.max_restricted, check.max_denergy
            ));
            self.flavor = Flavor::General;
        }
        if check.general_fails {
            let msg = format!("general residual {:e} exceeds tolerance {tol:e}", check.max_general);
            check.warning = Some(match check.warning.take() {
                Some(w) => format!("{w}; {msg}"),
                None => msg,
            });
        }
        Ok(check)
    }
}

/// Evaluates the first integrals at every sample of a trajectory.
pub fn attach_integrals(trajectory: &mut Trajectory, integrals: &[ObservableOnD]) -> Result<()> {
    trajectory.integrals = trajectory
        .states
        .iter()
        .map(|s| integrals.iter().map(|f| f.value(&s.x, &s.y)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ConservationReport {
    /// `max_t |f_i(t) − f_i(0)|` per integral.
    pub drifts: Vec<f64>,
    pub initial_values: Vec<f64>,
    pub trajectory: Trajectory,
}

impl ConservationReport {
    pub fn max_drift(&self) -> f64 {
        self.drifts.iter().fold(0.0, |m, d| m.max(*d))
    }
}

/// Integrates from `s0` and tracks the drift of each component of `F`.
pub fn conservation_check(
    system: &NonholonomicSystem,
    cs: &CompleteSolution,
    s0: &ConstrainedState,
    t_end: f64,
    dt: f64,
) -> Result<ConservationReport> {
    s0.validate(system)?;
    let lambda0 = cs.invert(&s0.x, &s0.y)?;
    let integrals = cs.first_integrals(&[(s0.x.clone(), lambda0)])?;
    let mut trajectory = integrate(system, s0, t_end, dt)?;
    attach_integrals(&mut trajectory, &integrals)?;
    Ok(ConservationReport {
        drifts: trajectory.integral_drifts(),
        initial_values: trajectory.integrals[0].clone(),
        trajectory,
    })
}

/// Whether [`involution_check`] asserts the result or only reports it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvolutionMode {
    /// Requires a restricted complete solution.
    Assert,
    /// Reports values for any complete solution.
    Advisory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvolutionReport {
    pub max_abs_bracket: f64,
    pub states: usize,
    pub pairs: usize,
    pub advisory: bool,
}

/// Max of `|{f_i, f_j}^{nh}|` over the states and all pairs `i < j`.
pub fn involution_check(
    system: &NonholonomicSystem,
    cs: &CompleteSolution,
    states: &[ConstrainedState],
    mode: InvolutionMode,
) -> Result<InvolutionReport> {
    if mode == InvolutionMode::Assert && cs.flavor() != Flavor::Restricted {
        return Err(Error::Precondition(
            "involution is only asserted for restricted complete solutions; use advisory mode".into(),
        ));
    }
    let r = cs.rank();
    let integrals: Vec<ObservableOnD> = (0..r).map(|i| cs.integral(i)).collect();
    let mut max_abs: f64 = 0.0;
    for s in states {
        for i in 0..r {
            for j in (i + 1)..r {
                let b = nonholonomic_bracket(system, &integrals[i], &integrals[j], s)?;
                max_abs = max_abs.max(b.abs());
            }
        }
    }
    Ok(InvolutionReport {
        max_abs_bracket: max_abs,
        states: states.len(),
        pairs: r * r.saturating_sub(1) / 2,
        advisory: mode == InvolutionMode::Advisory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::sode_symplectic_coefficients;
    use crate::systems::{free_particle, free_particle_affine_family, free_particle_sqrt_family, holonomic_plane};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn st(x: &[f64], y: &[f64]) -> ConstrainedState {
        ConstrainedState::from_slices(x, y)
    }

    #[test]
    fn sqrt_family_integrals() {
        let cs = free_particle_sqrt_family();
        let fs = cs.first_integrals(&[(v(&[0.0, 0.5, 0.0]), v(&[1.0, 2.0]))]).unwrap();
        let (x, y) = (v(&[0.1, 1.5, -0.3]), v(&[0.7, -0.4]));
        // F = (y2, y1 √(1 + x2²)), ordered so that F ∘ σ_λ = λ
        assert!((fs[0].value(&x, &y).unwrap() - y[1]).abs() < 1e-15);
        assert!((fs[1].value(&x, &y).unwrap() - y[0] * (1.0 + 1.5f64 * 1.5).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn affine_family_integrals() {
        let cs = free_particle_affine_family();
        let fs = cs.first_integrals(&[(v(&[0.0, 0.5, 0.0]), v(&[1.0, 2.0]))]).unwrap();
        let (x, y) = (v(&[0.1, 1.5, -0.3]), v(&[0.7, -0.4]));
        assert!((fs[0].value(&x, &y).unwrap() - y[1]).abs() < 1e-15);
        let expected = x[2] * y[1] - y[0] * (1.0 + x[1] * x[1]);
        assert!((fs[1].value(&x, &y).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn newton_inverse_matches_closed_form() {
        let closed = free_particle_affine_family();
        let newton = CompleteSolution::new(closed.family().clone(), Flavor::General);
        let (x, y) = (v(&[0.3, -1.1, 2.0]), v(&[0.4, 1.7]));
        let a = closed.invert(&x, &y).unwrap();
        let b = newton.invert(&x, &y).unwrap();
        assert!((a - b).amax() < 1e-10);
        let (jx, jy) = closed.inverse_jacobian(&x, &y).unwrap();
        let (kx, ky) = newton.inverse_jacobian(&x, &y).unwrap();
        assert!((jx - kx).amax() < 1e-6);
        assert!((jy - ky).amax() < 1e-6);
    }

    #[test]
    fn broken_inverse_is_rejected() {
        let cs = free_particle_sqrt_family().with_inverse(|_, y| y.clone());
        let err = cs.first_integrals(&[(v(&[0.0, 1.0, 0.0]), v(&[1.0, 2.0]))]).unwrap_err();
        assert!(matches!(err, Error::InvalidCompleteSolution(_)));
    }

    #[test]
    fn degenerate_family_is_rejected() {
        let family = SectionFamily::new(3, 2, |_, l| v(&[l[0] + l[1], l[0] + l[1]]));
        let cs = CompleteSolution::new(family, Flavor::General).with_inverse(|_, y| v(&[y[0], 0.0]));
        assert!(cs.validate(&[(v(&[0.0, 0.0, 0.0]), v(&[1.0, 0.0]))]).is_err());
    }

    #[test]
    fn integrals_are_conserved() {
        let sys = free_particle();
        let s0 = st(&[0.0, 1.0, 0.0], &[1.0, 1.0]);
        let report = conservation_check(&sys, &free_particle_sqrt_family(), &s0, 5.0, 1e-3).unwrap();
        assert!((report.initial_values[0] - 1.0).abs() < 1e-15);
        assert!((report.initial_values[1] - 2f64.sqrt()).abs() < 1e-15);
        assert!(report.max_drift() < 1e-8, "{:?}", report.drifts);
        let report = conservation_check(&sys, &free_particle_affine_family(), &s0, 5.0, 1e-3).unwrap();
        assert!(report.max_drift() < 1e-8, "{:?}", report.drifts);
        let report = conservation_check(&sys, &free_particle_affine_family(), &s0, 0.0, 1e-3).unwrap();
        assert_eq!(report.max_drift(), 0.0);
    }

    #[test]
    fn energy_section_is_the_dynamics() {
        let sys = Arc::new(free_particle());
        let energy = ObservableOnD::energy(sys.clone());
        let s = st(&[0.4, -0.9, 1.2], &[1.3, -0.6]);
        let eta = hamiltonian_section(&sys, &energy, &s).unwrap();
        let gamma = sode_symplectic_coefficients(&sys, &s).unwrap();
        assert!((eta - gamma).amax() < 1e-14);
        let zero = hamiltonian_section(&sys, &ObservableOnD::constant(3.0), &s).unwrap();
        assert_eq!(zero.amax(), 0.0);
    }

    #[test]
    fn involution_requires_restricted_flavor() {
        let sys = free_particle();
        let states = [st(&[0.0, 0.3, 0.1], &[1.0, -0.5])];
        let affine = free_particle_affine_family();
        assert!(matches!(
            involution_check(&sys, &affine, &states, InvolutionMode::Assert),
            Err(Error::Precondition(_))
        ));
        let report = involution_check(&sys, &affine, &states, InvolutionMode::Advisory).unwrap();
        assert!(report.advisory);
        let report =
            involution_check(&sys, &free_particle_sqrt_family(), &states, InvolutionMode::Assert).unwrap();
        assert!(report.max_abs_bracket < 1e-8);
        assert_eq!(report.pairs, 1);
    }

    #[test]
    fn flavor_verification_downgrades_false_claims() {
        let sys = free_particle();
        let points = vec![v(&[0.0, 0.5, 1.0]), v(&[1.0, -1.0, 2.0])];
        let lambdas = vec![v(&[1.0, 2.0])];
        let mut honest = free_particle_sqrt_family();
        let check = honest.verify_flavor(&sys, &points, &lambdas, 1e-8).unwrap();
        assert_eq!(check.verified, Flavor::Restricted);
        assert!(check.warning.is_none());
        let mut liar = CompleteSolution::new(free_particle_affine_family().family().clone(), Flavor::Restricted);
        let check = liar.verify_flavor(&sys, &points, &lambdas, 1e-8).unwrap();
        assert_eq!(check.verified, Flavor::General);
        assert_eq!(liar.flavor(), Flavor::General);
        assert!(check.warning.is_some());
        assert!(!check.general_fails);
    }

    #[test]
    fn jacobi_identity_holds_for_holonomic_system() {
        let sys = Arc::new(holonomic_plane());
        let f = ObservableOnD::new(|x, y| x[0] * y[1]).with_gradient(|x, y| {
            (v(&[y[1], 0.0, 0.0]), v(&[0.0, x[0]]))
        });
        let g = ObservableOnD::new(|_, y| y[0] * y[0]).with_gradient(|_, y| (v(&[0.0, 0.0, 0.0]), v(&[2.0 * y[0], 0.0])));
        let h = ObservableOnD::new(|x, y| x[1] * y[0] + x[0] * x[1]).with_gradient(|x, y| {
            (v(&[x[1], y[0] + x[0], 0.0]), v(&[x[1], 0.0]))
        });
        let s = st(&[0.4, -0.7, 1.1], &[0.9, -1.3]);
        let b = |a: &ObservableOnD, c: &ObservableOnD| bracket_observable(sys.clone(), a.clone(), c.clone());
        let jacobi = nonholonomic_bracket(&sys, &f, &b(&g, &h), &s).unwrap()
            + nonholonomic_bracket(&sys, &g, &b(&h, &f), &s).unwrap()
            + nonholonomic_bracket(&sys, &h, &b(&f, &g), &s).unwrap();
        assert!(jacobi.abs() < 1e-6, "jacobi sum {jacobi:e}");
        // and the brackets themselves are nontrivial
        assert!(nonholonomic_bracket(&sys, &f, &g, &s).unwrap().abs() > 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bracket_is_antisymmetric_and_bilinear(
            x in prop::array::uniform3(-2.0f64..2.0),
            y in prop::array::uniform2(-2.0f64..2.0),
            a in -3.0f64..3.0,
        ) {
            let sys = Arc::new(free_particle());
            let s = st(&x, &y);
            let f = ObservableOnD::new(|x, y| x[2] * y[0] + y[1] * y[1]).with_gradient(|x, y| {
                (
                    DVector::from_row_slice(&[0.0, 0.0, y[0]]),
                    DVector::from_row_slice(&[x[2], 2.0 * y[1]]),
                )
            });
            let g = ObservableOnD::energy(sys.clone());
            let fg = nonholonomic_bracket(&sys, &f, &g, &s).unwrap();
            let gf = nonholonomic_bracket(&sys, &g, &f, &s).unwrap();
            prop_assert!((fg + gf).abs() < 1e-12);
            prop_assert!(nonholonomic_bracket(&sys, &f, &f, &s).unwrap().abs() < 1e-12);
            let afg = nonholonomic_bracket(&sys, &f.scaled(a), &g, &s).unwrap();
            prop_assert!((afg - a * fg).abs() < 1e-10 * (1.0 + fg.abs()));
            let eta = hamiltonian_section(&sys, &f, &s).unwrap();
            let eta_a = hamiltonian_section(&sys, &f.scaled(a), &s).unwrap();
            prop_assert!((eta_a - eta * a).amax() < 1e-9);
        }

        #[test]
        fn round_trip_and_transversality(
            x in prop::array::uniform3(-2.0f64..2.0),
            l in prop::array::uniform2(-2.0f64..2.0),
        ) {
            for cs in [free_particle_sqrt_family(), free_particle_affine_family()] {
                let x = DVector::from_row_slice(&x);
                let l = DVector::from_row_slice(&l);
                let report = cs.validate(&[(x.clone(), l.clone())]).unwrap();
                prop_assert!(report.max_round_trip_error < 1e-10);
                let fs = cs.first_integrals(&[(x.clone(), l.clone())]).unwrap();
                let y = cs.sigma(&x, &l).unwrap();
                for (i, f) in fs.iter().enumerate() {
                    prop_assert!((f.value(&x, &y).unwrap() - l[i]).abs() < 1e-10);
                }
                prop_assert!(cs.transversality(&x, &y).unwrap().abs() > 1e-3);
            }
        }

        #[test]
        fn analytic_integral_gradients_match_differences(
            x in prop::array::uniform3(-2.0f64..2.0),
            y in prop::array::uniform2(-2.0f64..2.0),
        ) {
            let (x, y) = (DVector::from_row_slice(&x), DVector::from_row_slice(&y));
            for cs in [free_particle_sqrt_family(), free_particle_affine_family()] {
                for f in cs.first_integrals(&[]).unwrap() {
                    let (ax, ay) = f.gradients(&x, &y).unwrap();
                    let fd = f.clone().with_derivative_mode(DerivativeMode::FiniteDifference);
                    let (bx, by) = fd.gradients(&x, &y).unwrap();
                    prop_assert!((ax - bx).amax() < 1e-6);
                    prop_assert!((ay - by).amax() < 1e-6);
                }
            }
        }
    }
}
