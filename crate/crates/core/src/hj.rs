//! Nonholonomic Hamilton–Jacobi residuals for candidate sections of `D`.
//!
//! A section is given by its constrained quasivelocity components
//! `σ^α(x)`, i.e. the vector field `X = σ^α e_α` on configuration space.
//! All residuals are pointwise; a section "solves" a problem on a sample set
//! when the maximum residual over the set is below a tolerance.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::diff;
use crate::dynamics::{solve_gld, Pieces};
use crate::error::{check_finite, Error, Result};
use crate::frame::DerivativeMode;
use crate::integrate::{integrate, integrate_ode, step_schedule};
use crate::lagrangian::Regularity;
use crate::system::{ConstrainedState, NonholonomicSystem};

/// Default residual tolerance when analytic derivatives are available.
pub const ANALYTIC_TOLERANCE: f64 = 1e-9;
/// Default residual tolerance under finite differencing.
pub const FD_TOLERANCE: f64 = 1e-6;

pub type PointVectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type PointMatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type FamilyVectorFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type FamilyMatrixFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A section `σ: Q → D` in constrained quasivelocities.
#[derive(Clone)]
pub struct Section {
    n: usize,
    r: usize,
    map: PointVectorFn,
    jacobian: Option<PointMatrixFn>,
    mode: DerivativeMode,
}

impl fmt::Debug for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Section")
            .field("n", &self.n)
            .field("r", &self.r)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl Section {
    pub fn new<F>(n: usize, r: usize, map: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            n,
            r,
            map: Arc::new(map),
            jacobian: None,
            mode: DerivativeMode::Analytic,
        }
    }

    /// Constant quasivelocity components.
    pub fn constant(n: usize, values: &[f64]) -> Self {
        let values = DVector::from_row_slice(values);
        let r = values.len();
        Self::new(n, r, move |_| values.clone()).with_jacobian(move |_| DMatrix::zeros(r, n))
    }

    /// Registers the analytic Jacobian `[γ][i] = ∂σ^γ/∂x^i`.
    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_derivative_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "section expects {} coordinates, got {}",
                self.n,
                x.len()
            )));
        }
        let s = (self.map)(x);
        if s.len() != self.r {
            return Err(Error::Dimension(format!(
                "section returned {} components, expected {}",
                s.len(),
                self.r
            )));
        }
        check_finite(s.as_slice(), "section value")?;
        Ok(s)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = match (&self.jacobian, self.mode) {
            (Some(j), DerivativeMode::Analytic) => j(x),
            _ => diff::jacobian(|p| (self.map)(p), x, self.r, diff::FIRST_STEP),
        };
        check_finite(j.as_slice(), "section Jacobian")?;
        Ok(j)
    }

    fn check_system(&self, system: &NonholonomicSystem) -> Result<()> {
        if self.n != system.dim() || self.r != system.rank() {
            return Err(Error::Dimension(format!(
                "section is ({}, {}), system is ({}, {})",
                self.n,
                self.r,
                system.dim(),
                system.rank()
            )));
        }
        Ok(())
    }
}

/// A parametric family of sections `(x, λ) ↦ σ_λ(x)` with `λ ∈ R^r`.
#[derive(Clone)]
pub struct SectionFamily {
    n: usize,
    r: usize,
    map: FamilyVectorFn,
    jac_x: Option<FamilyMatrixFn>,
    jac_lambda: Option<FamilyMatrixFn>,
    mode: DerivativeMode,
}

impl fmt::Debug for SectionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SectionFamily")
            .field("n", &self.n)
            .field("r", &self.r)
            .finish()
    }
}

impl SectionFamily {
    pub fn new<F>(n: usize, r: usize, map: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            n,
            r,
            map: Arc::new(map),
            jac_x: None,
            jac_lambda: None,
            mode: DerivativeMode::Analytic,
        }
    }

    /// Analytic `∂σ/∂x` (`r × n`) and `∂σ/∂λ` (`r × r`).
    pub fn with_jacobians<JX, JL>(mut self, jac_x: JX, jac_lambda: JL) -> Self
    where
        JX: Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        JL: Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jac_x = Some(Arc::new(jac_x));
        self.jac_lambda = Some(Arc::new(jac_lambda));
        self
    }

    pub fn with_derivative_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    pub fn value(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        if lambda.len() != self.r {
            return Err(Error::Dimension(format!(
                "family expects {} parameters, got {}",
                self.r,
                lambda.len()
            )));
        }
        self.at(lambda).value(x)
    }

    pub fn jacobian_x(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.at(lambda).jacobian(x)
    }

    /// `[α][j] = ∂σ^α/∂λ_j`.
    pub fn jacobian_lambda(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = match (&self.jac_lambda, self.mode) {
            (Some(j), DerivativeMode::Analytic) => j(x, lambda),
            _ => diff::jacobian(|l| (self.map)(x, l), lambda, self.r, diff::FIRST_STEP),
        };
        check_finite(j.as_slice(), "family parameter Jacobian")?;
        Ok(j)
    }

    /// Fixes the parameters.
    pub fn at(&self, lambda: &DVector<f64>) -> Section {
        let (map, l) = (self.map.clone(), lambda.clone());
        let mut section = Section::new(self.n, self.r, move |x| map(x, &l)).with_derivative_mode(self.mode);
        if let Some(jx) = &self.jac_x {
            let (jx, l) = (jx.clone(), lambda.clone());
            section = section.with_jacobian(move |x| jx(x, &l));
        }
        section
    }
}

fn require_regular(system: &NonholonomicSystem, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
    match system.quasi().regularity_check(x, y)? {
        Regularity::Regular { .. } => Ok(()),
        Regularity::Degenerate { min_abs_eigenvalue } => {
            Err(Error::Degenerate { min_abs_eigenvalue })
        }
    }
}

/// Quantities shared by the residuals at `(x, σ(x))`.
struct SectionPieces {
    sigma: DVector<f64>,
    jac: DMatrix<f64>,
    rho: DMatrix<f64>,
    pieces: Pieces,
}

impl SectionPieces {
    fn at(system: &NonholonomicSystem, sec: &Section, x: &DVector<f64>) -> Result<Self> {
        sec.check_system(system)?;
        let sigma = sec.value(x)?;
        require_regular(system, x, &sigma)?;
        let jac = sec.jacobian(x)?;
        let pieces = Pieces::at(system, x, &sigma)?;
        let rho = pieces.rho(system.rank());
        Ok(Self {
            sigma,
            jac,
            rho,
            pieces,
        })
    }

    /// `K[α][i] = ∂_i (∂L/∂y^α ∘ σ) = ∂²L/∂y^α∂x^i + G_{αγ} ∂σ^γ/∂x^i`.
    fn composite_momentum_gradient(&self) -> DMatrix<f64> {
        &self.pieces.hyx + &self.pieces.g * &self.jac
    }
}

/// Left side minus right side of the general Hamilton–Jacobi equation, per
/// constrained index:
/// `L_σ(∂L/∂y^α ∘ σ) + ∂L/∂y^i C^i_{αβ} σ^β − ρ_α^i ∂L/∂x^i`.
pub fn general_hj_residual(
    system: &NonholonomicSystem,
    sec: &Section,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let sp = SectionPieces::at(system, sec, x)?;
    let field = &sp.rho * &sp.sigma;
    let lie = sp.composite_momentum_gradient() * field;
    let res = lie + &sp.pieces.p_c * &sp.sigma - sp.rho.transpose() * &sp.pieces.gx;
    check_finite(res.as_slice(), "general Hamilton–Jacobi residual")?;
    Ok(res)
}

/// The general residual expressed as an acceleration mismatch,
/// `G^{-1} · general_hj_residual = L_σ σ − f(x, σ(x))`.
pub fn general_hj_acceleration_residual(
    system: &NonholonomicSystem,
    sec: &Section,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let res = general_hj_residual(system, sec, x)?;
    let g = system.quasi().hessian_gld(x, &sec.value(x)?)?;
    solve_gld(&g, &res)
}

/// Components `(σ*ω^{LD})(e_α, e_β)`; zero exactly when the restricted
/// condition holds at `x`. The result is antisymmetric by construction.
pub fn restricted_hj_residual(
    system: &NonholonomicSystem,
    sec: &Section,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let r = system.rank();
    let sp = SectionPieces::at(system, sec, x)?;
    // n[α][β] = ρ_β^i K[α][i]
    let n = sp.composite_momentum_gradient() * &sp.rho;
    let mut res = DMatrix::zeros(r, r);
    for a in 0..r {
        for b in (a + 1)..r {
            let v = n[(a, b)] - n[(b, a)] + sp.pieces.p_c[(a, b)];
            res[(a, b)] = v;
            res[(b, a)] = -v;
        }
    }
    check_finite(res.as_slice(), "restricted Hamilton–Jacobi residual")?;
    Ok(res)
}

/// `σ*E_L = σ^α (∂L/∂y^α ∘ σ) − L ∘ σ`.
pub fn energy_pullback(system: &NonholonomicSystem, sec: &Section, x: &DVector<f64>) -> Result<f64> {
    sec.check_system(system)?;
    let sigma = sec.value(x)?;
    system.quasi().energy(x, &sigma)
}

/// `⟨d(σ*E_L), e_α⟩ = ρ_α^i ∂_i(σ*E_L)`.
pub fn denergy_annihilator_residual(
    system: &NonholonomicSystem,
    sec: &Section,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    sec.check_system(system)?;
    let r = system.rank();
    let sigma = sec.value(x)?;
    let jac = sec.jacobian(x)?;
    let (dx, dy) = system.quasi().energy_gradients(x, &sigma)?;
    let rho = system.frame().basis(x)?.columns(0, r).into_owned();
    let res = rho.transpose() * (dx + jac.transpose() * dy);
    check_finite(res.as_slice(), "energy differential residual")?;
    Ok(res)
}

/// Integrates the integral curve of `X = σ^α e_α` from `x0` and lifts it to
/// `D`, integrates the full dynamics from `σ(x0)`, and returns the largest
/// distance between the two in `(x, y)` coordinates.
pub fn verify_solution_by_flow(
    system: &NonholonomicSystem,
    sec: &Section,
    x0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    sec.check_system(system)?;
    let times = step_schedule(t_end, dt)?;
    let frame = system.frame();
    let base = integrate_ode(
        |x: &DVector<f64>| frame.constrained_velocity(x, &sec.value(x)?),
        x0.clone(),
        &times,
    )
    .map_err(|(partial, e)| Error::Integration {
        time: times[partial.len().saturating_sub(1)],
        reason: Box::new(e),
    })?;
    let s0 = ConstrainedState::new(x0.clone(), sec.value(x0)?);
    let full = integrate(system, &s0, t_end, dt)?;
    let mut deviation: f64 = 0.0;
    for (xq, s) in base.iter().zip(&full.states) {
        let lifted = ConstrainedState::new(xq.clone(), sec.value(xq)?);
        deviation = deviation.max((lifted.to_vector() - s.to_vector()).norm());
    }
    Ok(deviation)
}

/// Maxima of all residuals of a section over a set of sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionScan {
    pub points: usize,
    pub max_general: f64,
    pub max_restricted: f64,
    pub max_denergy: f64,
    pub energy_mean: f64,
    /// Population variance of `σ*E_L` over the samples.
    pub energy_variance: f64,
}

impl SectionScan {
    pub fn solves_general(&self, tol: f64) -> bool {
        self.max_general <= tol
    }

    /// Both the Lagrangian-section and energy conditions hold.
    pub fn solves_restricted(&self, tol: f64) -> bool {
        self.max_general <= tol && self.max_restricted <= tol && self.max_denergy <= tol
    }
}

pub fn scan_section(
    system: &NonholonomicSystem,
    sec: &Section,
    points: &[DVector<f64>],
) -> Result<SectionScan> {
    let mut scan = SectionScan {
        points: points.len(),
        max_general: 0.0,
        max_restricted: 0.0,
        max_denergy: 0.0,
        energy_mean: 0.0,
        energy_variance: 0.0,
    };
    let mut energies = Vec::with_capacity(points.len());
    for x in points {
        scan.max_general = scan.max_general.max(general_hj_residual(system, sec, x)?.amax());
        scan.max_restricted = scan.max_restricted.max(restricted_hj_residual(system, sec, x)?.amax());
        scan.max_denergy = scan.max_denergy.max(denergy_annihilator_residual(system, sec, x)?.amax());
        energies.push(energy_pullback(system, sec, x)?);
    }
    if !energies.is_empty() {
        let m = energies.iter().sum::<f64>() / energies.len() as f64;
        scan.energy_mean = m;
        scan.energy_variance =
            energies.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / energies.len() as f64;
    }
    Ok(scan)
}
