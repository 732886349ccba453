use nalgebra::DVector;

use crate::error::{check_finite, Error, Result};
use crate::frame::{DerivativeMode, FrameField};
use crate::lagrangian::{LagrangianDef, QuasiLagrangian};

/// A constrained Lagrangian system `(L, D)` on a chart of `R^n`, with `D`
/// spanned by the first `r` columns of the frame.
#[derive(Debug, Clone)]
pub struct NonholonomicSystem {
    name: String,
    frame: FrameField,
    lagrangian: LagrangianDef,
}

impl NonholonomicSystem {
    pub fn new(name: impl Into<String>, frame: FrameField, lagrangian: LagrangianDef) -> Self {
        Self {
            name: name.into(),
            frame,
            lagrangian,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn frame(&self) -> &FrameField {
        &self.frame
    }

    pub fn lagrangian(&self) -> &LagrangianDef {
        &self.lagrangian
    }

    pub fn quasi(&self) -> QuasiLagrangian<'_> {
        QuasiLagrangian::new(&self.lagrangian, &self.frame)
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn rank(&self) -> usize {
        self.frame.rank()
    }

    /// Applies `mode` to both the frame and the Lagrangian.
    pub fn with_derivative_mode(mut self, mode: DerivativeMode) -> Self {
        self.frame = self.frame.with_derivative_mode(mode);
        self.lagrangian = self.lagrangian.with_derivative_mode(mode);
        self
    }
}

/// A point `(x, y^α, y^A = 0)` of the constraint subbundle `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl ConstrainedState {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Self {
        Self { x, y }
    }

    pub fn from_slices(x: &[f64], y: &[f64]) -> Self {
        Self::new(DVector::from_row_slice(x), DVector::from_row_slice(y))
    }

    pub fn validate(&self, system: &NonholonomicSystem) -> Result<()> {
        if self.x.len() != system.dim() || self.y.len() != system.rank() {
            return Err(Error::Dimension(format!(
                "state has (x, y) sizes ({}, {}), system expects ({}, {})",
                self.x.len(),
                self.y.len(),
                system.dim(),
                system.rank()
            )));
        }
        check_finite(self.x.as_slice(), "state position")?;
        check_finite(self.y.as_slice(), "state quasivelocity")
    }

    /// Stacks `(x, y)` into one vector.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.x.len();
        let mut z = DVector::zeros(n + self.y.len());
        z.rows_mut(0, n).copy_from(&self.x);
        z.rows_mut(n, self.y.len()).copy_from(&self.y);
        z
    }

    pub fn from_vector(z: &DVector<f64>, n: usize) -> Self {
        Self::new(z.rows(0, n).into_owned(), z.rows(n, z.len() - n).into_owned())
    }

    /// Natural velocities `ẋ = Σ_α y^α e_α(x)`.
    pub fn velocity(&self, system: &NonholonomicSystem) -> Result<DVector<f64>> {
        system.frame().constrained_velocity(&self.x, &self.y)
    }
}
