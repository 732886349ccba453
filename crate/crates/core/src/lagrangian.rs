//! Lagrangians and their derivatives in quasivelocity coordinates.
//!
//! With a frame `E(x)` the Lagrangian in quasivelocities is
//! `L̃(x, y) = L(x, E(x) y)`. Every quantity here is evaluated on the
//! constraint subbundle: the caller passes the `r` constrained
//! quasivelocities and the trailing `y^A` are set to zero explicitly.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::diff;
use crate::error::{check_finite, Error, Result};
use crate::frame::{DerivativeMode, FrameField};

/// Relative eigenvalue cutoff below which `G^{LD}` counts as degenerate.
pub const REGULARITY_TOLERANCE: f64 = 1e-10;

pub type PhaseScalarFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
pub type PhaseVectorFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type PhaseMatrixFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Analytic derivatives of `L(x, v)` in natural coordinates.
#[derive(Clone)]
pub struct LagrangianDerivatives {
    /// `∂L/∂x`.
    pub grad_x: PhaseVectorFn,
    /// `∂L/∂v`.
    pub grad_v: PhaseVectorFn,
    /// `∂²L/∂v∂v`.
    pub hess_vv: PhaseMatrixFn,
    /// `[i][j] = ∂²L/∂v^i ∂x^j`.
    pub hess_vx: PhaseMatrixFn,
}

/// A Lagrangian `L(x, ẋ)` in natural velocities.
#[derive(Clone)]
pub struct LagrangianDef {
    value: PhaseScalarFn,
    derivatives: Option<LagrangianDerivatives>,
    mode: DerivativeMode,
}

impl fmt::Debug for LagrangianDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangianDef")
            .field("analytic", &self.derivatives.is_some())
            .field("mode", &self.mode)
            .finish()
    }
}

impl LagrangianDef {
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            derivatives: None,
            mode: DerivativeMode::Analytic,
        }
    }

    pub fn with_derivatives(mut self, derivatives: LagrangianDerivatives) -> Self {
        self.derivatives = Some(derivatives);
        self
    }

    pub fn with_derivative_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.mode
    }

    /// `k · L`, keeping analytic derivatives consistent.
    pub fn scaled(&self, k: f64) -> Self {
        let value = self.value.clone();
        let derivatives = self.derivatives.as_ref().map(|d| {
            let (gx, gv, hvv, hvx) = (
                d.grad_x.clone(),
                d.grad_v.clone(),
                d.hess_vv.clone(),
                d.hess_vx.clone(),
            );
            LagrangianDerivatives {
                grad_x: Arc::new(move |x, v| gx(x, v) * k),
                grad_v: Arc::new(move |x, v| gv(x, v) * k),
                hess_vv: Arc::new(move |x, v| hvv(x, v) * k),
                hess_vx: Arc::new(move |x, v| hvx(x, v) * k),
            }
        });
        Self {
            value: Arc::new(move |x, v| k * value(x, v)),
            derivatives,
            mode: self.mode,
        }
    }

    pub fn value(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        let l = (self.value)(x, v);
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::NumericDomain("Lagrangian value".into()))
        }
    }

    fn analytic(&self) -> Option<&LagrangianDerivatives> {
        match self.mode {
            DerivativeMode::Analytic => self.derivatives.as_ref(),
            DerivativeMode::FiniteDifference => None,
        }
    }
}

/// Verdict of the regularity test on `G^{LD}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularity {
    Regular { min_abs_eigenvalue: f64 },
    Degenerate { min_abs_eigenvalue: f64 },
}

impl Regularity {
    pub fn is_regular(&self) -> bool {
        matches!(self, Regularity::Regular { .. })
    }

    pub fn min_abs_eigenvalue(&self) -> f64 {
        match *self {
            Regularity::Regular { min_abs_eigenvalue } | Regularity::Degenerate { min_abs_eigenvalue } => {
                min_abs_eigenvalue
            }
        }
    }
}

/// `L̃(x, y) = L(x, E(x) y)` for a Lagrangian paired with a frame.
#[derive(Debug, Clone, Copy)]
pub struct QuasiLagrangian<'a> {
    lagrangian: &'a LagrangianDef,
    frame: &'a FrameField,
}

impl<'a> QuasiLagrangian<'a> {
    pub fn new(lagrangian: &'a LagrangianDef, frame: &'a FrameField) -> Self {
        Self { lagrangian, frame }
    }

    pub fn frame(&self) -> &'a FrameField {
        self.frame
    }

    /// Appends `y^A = 0` to the constrained quasivelocities.
    pub fn on_constraint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let r = self.frame.rank();
        if y.len() != r {
            return Err(Error::Dimension(format!(
                "expected {r} constrained quasivelocities, got {}",
                y.len()
            )));
        }
        let mut full = DVector::zeros(self.frame.dim());
        full.rows_mut(0, r).copy_from(y);
        Ok(full)
    }

    /// `L̃(x, y_full)`.
    pub fn value(&self, x: &DVector<f64>, y_full: &DVector<f64>) -> Result<f64> {
        let v = self.frame.to_velocities(x, y_full)?;
        self.lagrangian.value(x, &v)
    }

    fn value_unchecked(&self, x: &DVector<f64>, y_full: &DVector<f64>) -> f64 {
        match self.frame.basis(x) {
            Ok(e) => (self.lagrangian.value)(x, &(e * y_full)),
            Err(_) => f64::NAN,
        }
    }

    /// `∂L̃/∂y` over all `n` quasivelocities at `(x, y_full)`.
    pub fn grad_y_full(&self, x: &DVector<f64>, y_full: &DVector<f64>) -> Result<DVector<f64>> {
        let g = match self.lagrangian.analytic() {
            Some(d) => {
                let e = self.frame.basis(x)?;
                let v = &e * y_full;
                e.transpose() * (d.grad_v)(x, &v)
            }
            None => diff::gradient(|p| self.value_unchecked(x, p), y_full, diff::FIRST_STEP),
        };
        check_finite(g.as_slice(), "∂L/∂y")?;
        Ok(g)
    }

    /// `∂L̃/∂x` at fixed quasivelocities.
    pub fn grad_x(&self, x: &DVector<f64>, y_full: &DVector<f64>) -> Result<DVector<f64>> {
        let g = match self.lagrangian.analytic() {
            Some(d) => {
                let e = self.frame.basis(x)?;
                let v = &e * y_full;
                let gv = (d.grad_v)(x, &v);
                let mut g = (d.grad_x)(x, &v);
                for i in 0..x.len() {
                    g[i] += gv.dot(&(self.frame.partial(x, i)? * y_full));
                }
                g
            }
            None => diff::gradient(|p| self.value_unchecked(p, y_full), x, diff::FIRST_STEP),
        };
        check_finite(g.as_slice(), "∂L/∂x")?;
        Ok(g)
    }

    /// `∂²L̃/∂y∂y` over all quasivelocities.
    pub fn hess_yy(&self, x: &DVector<f64>, y_full: &DVector<f64>) -> Result<DMatrix<f64>> {
        let h = match self.lagrangian.analytic() {
            Some(d) => {
                let e = self.frame.basis(x)?;
                let v = &e * y_full;
                e.transpose() * (d.hess_vv)(x, &v) * &e
            }
            None => diff::hessian(|p| self.value_unchecked(x, p), y_full, diff::SECOND_STEP),
        };
        check_finite(h.as_slice(), "∂²L/∂y∂y")?;
        Ok(h)
    }

    /// `[a][i] = ∂²L̃/∂y^a ∂x^i`.
    pub fn hess_yx(&self, x: &DVector<f64>, y_full: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = x.len();
        let h = match self.lagrangian.analytic() {
            Some(d) => {
                let e = self.frame.basis(x)?;
                let v = &e * y_full;
                let gv = (d.grad_v)(x, &v);
                let hvv = (d.hess_vv)(x, &v);
                let hvx = (d.hess_vx)(x, &v);
                let mut h = DMatrix::zeros(n, n);
                for i in 0..n {
                    let de = self.frame.partial(x, i)?;
                    // ∂_i (E^T ∇_v L(x, E y))
                    let inner = hvx.column(i) + &hvv * (&de * y_full);
                    let col = de.transpose() * &gv + e.transpose() * inner;
                    h.set_column(i, &col);
                }
                h
            }
            None => diff::mixed_hessian(
                |yy, xx| self.value_unchecked(xx, yy),
                y_full,
                x,
                diff::SECOND_STEP,
            ),
        };
        check_finite(h.as_slice(), "∂²L/∂y∂x")?;
        Ok(h)
    }

    /// `(∂L̃/∂y^α, ∂L̃/∂y^A)` at the point `(x, y, 0)` of `D`.
    pub fn grad_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.grad_y_full(x, &self.on_constraint(y)?)
    }

    /// The constrained Hessian `G^{LD}_{αβ} = ∂²L̃/∂y^α∂y^β (x, y, 0)`.
    pub fn hessian_gld(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        let r = self.frame.rank();
        let full = self.hess_yy(x, &self.on_constraint(y)?)?;
        let g = full.view((0, 0), (r, r)).into_owned();
        // Symmetrize away differencing asymmetry.
        Ok((&g + g.transpose()) * 0.5)
    }

    /// Eigenvalues of `G^{LD}` in ascending order.
    pub fn gld_eigenvalues(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let g = self.hessian_gld(x, y)?;
        let mut ev: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(DVector::from_vec(ev))
    }

    pub fn regularity_check(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<Regularity> {
        let ev = self.gld_eigenvalues(x, y)?;
        let min_abs = ev.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
        let max_abs = ev.amax();
        Ok(if min_abs > REGULARITY_TOLERANCE * max_abs.max(1.0) {
            Regularity::Regular { min_abs_eigenvalue: min_abs }
        } else {
            Regularity::Degenerate { min_abs_eigenvalue: min_abs }
        })
    }

    /// `E_L = y^α ∂L̃/∂y^α − L̃` on `D`.
    pub fn energy(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        let full = self.on_constraint(y)?;
        let p = self.grad_y_full(x, &full)?;
        let r = self.frame.rank();
        let e = p.rows(0, r).dot(y) - self.value(x, &full)?;
        check_finite(&[e], "energy")?;
        Ok(e)
    }

    /// Derivatives of the energy restricted to `D` in the coordinates
    /// `(x, y^α)`: `(∂E/∂x^i, ∂E/∂y^α)`.
    pub fn energy_gradients(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let r = self.frame.rank();
        let full = self.on_constraint(y)?;
        let hyx = self.hess_yx(x, &full)?;
        let gx = self.grad_x(x, &full)?;
        let dx = hyx.rows(0, r).transpose() * y - gx;
        let g = self.hessian_gld(x, y)?;
        let dy = g * y;
        Ok((dx, dy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn contact_frame() -> FrameField {
        FrameField::from_b_with_partials(
            3,
            2,
            |x| DMatrix::from_row_slice(1, 2, &[x[1], 0.0]),
            |_, k| DMatrix::from_row_slice(1, 2, &[if k == 1 { 1.0 } else { 0.0 }, 0.0]),
        )
        .unwrap()
    }

    fn kinetic() -> LagrangianDef {
        LagrangianDef::new(|_, v| 0.5 * v.norm_squared()).with_derivatives(LagrangianDerivatives {
            grad_x: Arc::new(|x, _| DVector::zeros(x.len())),
            grad_v: Arc::new(|_, v| v.clone()),
            hess_vv: Arc::new(|x, _| DMatrix::identity(x.len(), x.len())),
            hess_vx: Arc::new(|x, _| DMatrix::zeros(x.len(), x.len())),
        })
    }

    /// A Lagrangian with position dependence and a magnetic-like linear term.
    fn charged() -> LagrangianDef {
        LagrangianDef::new(|x, v| {
            0.5 * (1.0 + x[0] * x[0]) * v[0] * v[0] + 0.5 * v[1] * v[1] + 0.5 * v[2] * v[2]
                + x[2] * v[1]
                - x[1].cos()
        })
    }

    #[test]
    fn contact_gradient_values() {
        let (l, f) = (kinetic(), contact_frame());
        let ql = QuasiLagrangian::new(&l, &f);
        let g = ql.grad_y(&v(&[0.0, 1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert!((g - v(&[2.0, 1.0, 1.0])).amax() < 1e-14);
        let zero = ql.grad_y(&v(&[0.3, 2.0, 1.0]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(zero, DVector::zeros(3));
    }

    #[test]
    fn contact_hessian_values() {
        let (l, f) = (kinetic(), contact_frame());
        let ql = QuasiLagrangian::new(&l, &f);
        let g = ql.hessian_gld(&v(&[5.0, 1.0, -3.0]), &v(&[0.4, 0.2])).unwrap();
        assert!((g - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).amax() < 1e-14);
        let g0 = ql.hessian_gld(&v(&[5.0, 0.0, -3.0]), &v(&[0.4, 0.2])).unwrap();
        assert!((g0 - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn contact_energy_values() {
        let (l, f) = (kinetic(), contact_frame());
        let ql = QuasiLagrangian::new(&l, &f);
        assert!((ql.energy(&v(&[0.0, 0.0, 0.0]), &v(&[1.0, 1.0])).unwrap() - 1.0).abs() < 1e-14);
        assert!((ql.energy(&v(&[0.0, 1.0, 0.0]), &v(&[1.0, 1.0])).unwrap() - 1.5).abs() < 1e-14);
        assert_eq!(ql.energy(&v(&[1.0, 2.0, 3.0]), &v(&[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn regularity_verdicts() {
        let (l, f) = (kinetic(), contact_frame());
        let ql = QuasiLagrangian::new(&l, &f);
        let verdict = ql.regularity_check(&v(&[0.0, 3.0, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert!(verdict.is_regular());
        assert!((verdict.min_abs_eigenvalue() - 1.0).abs() < 1e-12);

        // L = ½ẋ1² on R², D = span{∂x2}: the only admissible direction is free.
        let lazy = LagrangianDef::new(|_, v| 0.5 * v[0] * v[0]);
        let swap = FrameField::new(2, 1, |_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))
            .unwrap();
        let ql = QuasiLagrangian::new(&lazy, &swap);
        let verdict = ql.regularity_check(&v(&[0.5, 0.5]), &v(&[1.0])).unwrap();
        assert!(!verdict.is_regular());
        assert!(verdict.min_abs_eigenvalue() < 1e-6);
    }

    #[test]
    fn scaling_doubles_hessian_and_keeps_verdict() {
        let f = contact_frame();
        let (l, l2) = (kinetic(), kinetic().scaled(2.0));
        let x = v(&[0.1, -0.7, 0.3]);
        let y = v(&[0.5, -1.5]);
        let g = QuasiLagrangian::new(&l, &f).hessian_gld(&x, &y).unwrap();
        let g2 = QuasiLagrangian::new(&l2, &f).hessian_gld(&x, &y).unwrap();
        assert!((g2 - g * 2.0).amax() < 1e-14);
        assert!(QuasiLagrangian::new(&l2, &f).regularity_check(&x, &y).unwrap().is_regular());
    }

    #[test]
    fn value_round_trip_through_frame() {
        let (l, f) = (charged(), contact_frame());
        let ql = QuasiLagrangian::new(&l, &f);
        let x = v(&[0.3, 1.1, -0.4]);
        let yf = v(&[0.7, -0.2, 0.5]);
        let vel = f.to_velocities(&x, &yf).unwrap();
        assert_eq!(ql.value(&x, &yf).unwrap(), l.value(&x, &vel).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn finite_differences_match_chain_rule(
            x in prop::array::uniform3(-2.0f64..2.0),
            y in prop::array::uniform3(-2.0f64..2.0),
        ) {
            let analytic = kinetic();
            let fd = kinetic().with_derivative_mode(DerivativeMode::FiniteDifference);
            let f = contact_frame();
            let fd_frame = contact_frame().with_derivative_mode(DerivativeMode::FiniteDifference);
            let qa = QuasiLagrangian::new(&analytic, &f);
            let qf = QuasiLagrangian::new(&fd, &fd_frame);
            let x = DVector::from_row_slice(&x);
            let y = DVector::from_row_slice(&y);
            prop_assert!((qa.grad_y_full(&x, &y).unwrap() - qf.grad_y_full(&x, &y).unwrap()).amax() < 1e-6);
            prop_assert!((qa.grad_x(&x, &y).unwrap() - qf.grad_x(&x, &y).unwrap()).amax() < 1e-6);
            prop_assert!((qa.hess_yy(&x, &y).unwrap() - qf.hess_yy(&x, &y).unwrap()).amax() < 1e-6);
            prop_assert!((qa.hess_yx(&x, &y).unwrap() - qf.hess_yx(&x, &y).unwrap()).amax() < 1e-6);
        }

        #[test]
        fn constrained_hessian_is_symmetric(
            x in prop::array::uniform3(-2.0f64..2.0),
            y in prop::array::uniform2(-2.0f64..2.0),
        ) {
            let (l, f) = (charged(), contact_frame());
            let ql = QuasiLagrangian::new(&l, &f);
            let g = ql.hessian_gld(&DVector::from_row_slice(&x), &DVector::from_row_slice(&y)).unwrap();
            prop_assert!((&g - g.transpose()).amax() < 1e-8);
        }

        /// Energy is a function on D: re-coordinatizing D with
        /// `e'_1 = e_1 + e_2`, `e'_2 = e_2` and `y' = (y1, y2 − y1)` leaves it unchanged.
        #[test]
        fn energy_is_frame_independent(
            x in prop::array::uniform3(-2.0f64..2.0),
            y in prop::array::uniform2(-2.0f64..2.0),
        ) {
            let l = charged();
            let f = contact_frame();
            let sheared = FrameField::new(3, 2, |x| {
                DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, x[1], 0.0, 1.0])
            }).unwrap();
            let x = DVector::from_row_slice(&x);
            let y = DVector::from_row_slice(&y);
            let y_sheared = DVector::from_row_slice(&[y[0], y[1] - y[0]]);
            let e1 = QuasiLagrangian::new(&l, &f).energy(&x, &y).unwrap();
            let e2 = QuasiLagrangian::new(&l, &sheared).energy(&x, &y_sheared).unwrap();
            prop_assert!((e1 - e2).abs() < 1e-8);
        }
    }
}
