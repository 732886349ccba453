//! Distribution-adapted moving frames on a single chart of `R^n`.
//!
//! A frame is an invertible `n × n` matrix field `E(x)` whose first `r`
//! columns span the constraint distribution `D` and whose remaining columns
//! complete it to a basis of the tangent space. Quasivelocities are the
//! components of a velocity in this basis, `v = E(x) y`, so the constraints
//! read `y^A = 0` for the trailing `n - r` entries.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::diff;
use crate::error::{check_finite, Error, Result};

/// Largest condition number of `E(x)` accepted before a point is rejected.
pub const MAX_FRAME_CONDITION: f64 = 1e12;

/// Relative singular-value cutoff used by [`FrameField::bracket_generating_rank`].
pub const RANK_TOLERANCE: f64 = 1e-8;

pub type BasisFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// `(x, k) ↦ ∂E/∂x^k`.
pub type BasisPartialFn = Arc<dyn Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync>;

/// How derivatives of user-supplied maps are obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Use registered analytic derivatives, falling back to finite differences.
    #[default]
    Analytic,
    /// Ignore analytic callbacks and always difference numerically.
    FiniteDifference,
}

#[derive(Clone)]
pub struct FrameField {
    n: usize,
    r: usize,
    basis: BasisFn,
    partial: Option<BasisPartialFn>,
    mode: DerivativeMode,
}

impl fmt::Debug for FrameField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameField")
            .field("n", &self.n)
            .field("r", &self.r)
            .field("analytic_partials", &self.partial.is_some())
            .field("mode", &self.mode)
            .finish()
    }
}

impl FrameField {
    pub fn new<F>(n: usize, r: usize, basis: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if n == 0 || r == 0 || r > n {
            return Err(Error::InvalidArgument(format!(
                "frame needs 0 < r <= n, got n = {n}, r = {r}"
            )));
        }
        Ok(Self {
            n,
            r,
            basis: Arc::new(basis),
            partial: None,
            mode: DerivativeMode::Analytic,
        })
    }

    /// The coordinate frame `E(x) = I` with the first `r` axes constrained.
    pub fn identity(n: usize, r: usize) -> Result<Self> {
        Self::new(n, r, move |_| DMatrix::identity(n, n))
            .map(|f| f.with_partials(move |_, _| DMatrix::zeros(n, n)))
    }

    /// Frame for constraints of the form `ẋ^A = B^A_α(x) ẋ^α`, where the
    /// first `r` coordinates are the free ones:
    /// `e_α = ∂_α + B^A_α ∂_A`, `e_A = ∂_A`.
    ///
    /// `b` returns the `(n - r) × r` matrix `B(x)`.
    pub fn from_b<B>(n: usize, r: usize, b: B) -> Result<Self>
    where
        B: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::new(n, r, move |x| b_block(n, r, &b(x)))
    }

    /// [`FrameField::from_b`] with analytic partials `(x, k) ↦ ∂B/∂x^k`.
    pub fn from_b_with_partials<B, DB>(n: usize, r: usize, b: B, db: DB) -> Result<Self>
    where
        B: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        DB: Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync + 'static,
    {
        let frame = Self::from_b(n, r, b)?;
        Ok(frame.with_partials(move |x, k| {
            let mut e = DMatrix::zeros(n, n);
            e.view_mut((r, 0), (n - r, r)).copy_from(&db(x, k));
            e
        }))
    }

    /// Registers analytic partial derivatives `(x, k) ↦ ∂E/∂x^k`.
    pub fn with_partials<P>(mut self, partial: P) -> Self
    where
        P: Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.partial = Some(Arc::new(partial));
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

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.mode
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "point has {} components, frame dimension is {}",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// Evaluates `E(x)` without a conditioning check.
    pub fn basis(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let e = (self.basis)(x);
        if e.shape() != (self.n, self.n) {
            return Err(Error::Dimension(format!(
                "frame matrix is {}x{}, expected {}x{}",
                e.nrows(),
                e.ncols(),
                self.n,
                self.n
            )));
        }
        check_finite(e.as_slice(), "frame matrix")?;
        Ok(e)
    }

    /// Condition number of `E(x)` (ratio of extreme singular values).
    pub fn condition_number(&self, x: &DVector<f64>) -> Result<f64> {
        let e = self.basis(x)?;
        Ok(condition(&e))
    }

    /// Evaluates `E(x)` and rejects it when the condition number exceeds
    /// [`MAX_FRAME_CONDITION`].
    pub fn checked_basis(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let e = self.basis(x)?;
        let cond = condition(&e);
        if !(cond <= MAX_FRAME_CONDITION) {
            return Err(Error::FrameDegenerate {
                point: x.iter().copied().collect(),
                condition: cond,
            });
        }
        Ok(e)
    }

    /// `∂E/∂x^k` at `x`.
    pub fn partial(&self, x: &DVector<f64>, k: usize) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let d = match (&self.partial, self.mode) {
            (Some(p), DerivativeMode::Analytic) => p(x, k),
            _ => diff::matrix_partial(|p| (self.basis)(p), x, k, diff::FIRST_STEP),
        };
        check_finite(d.as_slice(), "frame derivative")?;
        Ok(d)
    }

    /// Jacobian `J[i][j] = ∂_j e_a^i` of frame column `a`.
    pub fn column_jacobian(&self, x: &DVector<f64>, a: usize) -> Result<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(self.n, self.n);
        for k in 0..self.n {
            let d = self.partial(x, k)?;
            jac.set_column(k, &d.column(a));
        }
        Ok(jac)
    }

    /// Lie bracket `[e_a, e_b]^i = e_a^j ∂_j e_b^i − e_b^j ∂_j e_a^i`.
    pub fn lie_bracket(&self, a: usize, b: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_column(a)?;
        self.check_column(b)?;
        let e = self.basis(x)?;
        if a == b {
            return Ok(DVector::zeros(self.n));
        }
        let ja = self.column_jacobian(x, a)?;
        let jb = self.column_jacobian(x, b)?;
        let bracket = &jb * e.column(a) - &ja * e.column(b);
        check_finite(bracket.as_slice(), "Lie bracket")?;
        Ok(bracket)
    }

    fn check_column(&self, a: usize) -> Result<()> {
        if a >= self.n {
            return Err(Error::InvalidArgument(format!(
                "column index {a} out of range for frame of dimension {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Expands `[e_α, e_β]` in the full frame for every pair of constrained
    /// vectors.
    pub fn structure_coefficients(&self, x: &DVector<f64>) -> Result<StructureCoefficients> {
        let e = self.checked_basis(x)?;
        let lu = e.clone().lu();
        let (n, r) = (self.n, self.r);
        let mut coeffs = vec![0.0; n * r * r];
        let mut residual: f64 = 0.0;
        let jacobians = (0..r)
            .map(|a| self.column_jacobian(x, a))
            .collect::<Result<Vec<_>>>()?;
        for alpha in 0..r {
            for beta in (alpha + 1)..r {
                let bracket =
                    &jacobians[beta] * e.column(alpha) - &jacobians[alpha] * e.column(beta);
                let c = lu
                    .solve(&bracket)
                    .ok_or_else(|| Error::SingularSolve("structure coefficients".into()))?;
                check_finite(c.as_slice(), "structure coefficients")?;
                residual = residual.max((&e * &c - &bracket).amax());
                for i in 0..n {
                    coeffs[(i * r + alpha) * r + beta] = c[i];
                    coeffs[(i * r + beta) * r + alpha] = -c[i];
                }
            }
        }
        Ok(StructureCoefficients {
            n,
            r,
            coeffs,
            point: x.clone(),
            solve_residual: residual,
        })
    }

    /// Natural velocities from full quasivelocities: `v = E(x) y`.
    pub fn to_velocities(&self, x: &DVector<f64>, y_full: &DVector<f64>) -> Result<DVector<f64>> {
        if y_full.len() != self.n {
            return Err(Error::Dimension(format!(
                "expected {} quasivelocities, got {}",
                self.n,
                y_full.len()
            )));
        }
        Ok(self.basis(x)? * y_full)
    }

    /// Full quasivelocities from natural velocities: `y = E(x)^{-1} v`.
    pub fn to_quasivelocities(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.n {
            return Err(Error::Dimension(format!(
                "expected {} velocities, got {}",
                self.n,
                v.len()
            )));
        }
        self.checked_basis(x)?
            .lu()
            .solve(v)
            .ok_or_else(|| Error::SingularSolve("quasivelocity transform".into()))
    }

    /// `Σ_α y^α e_α(x)`: the admissible velocity with constrained
    /// quasivelocities `y`.
    pub fn constrained_velocity(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.r {
            return Err(Error::Dimension(format!(
                "expected {} constrained quasivelocities, got {}",
                self.r,
                y.len()
            )));
        }
        let e = self.basis(x)?;
        Ok(e.columns(0, self.r) * y)
    }

    /// Numerical rank at `x` of the span of `e_1..e_r` together with their
    /// iterated brackets. Depth 1 is the distribution itself; each further
    /// level brackets the previous level with the generators.
    pub fn bracket_generating_rank(&self, x: &DVector<f64>, max_depth: usize) -> Result<usize> {
        if max_depth == 0 {
            return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
        }
        self.check_point(x)?;
        let generators: Vec<FieldExpr> = (0..self.r).map(FieldExpr::Column).collect();
        let mut vectors = Vec::new();
        for g in &generators {
            vectors.push(g.eval(self, x)?);
        }
        let mut level = generators.clone();
        for depth in 2..=max_depth {
            if rank_of(&vectors, self.n) == self.n {
                break;
            }
            let mut next = Vec::new();
            for (i, v) in level.iter().enumerate() {
                for (j, g) in generators.iter().enumerate() {
                    // at depth 2 both sides are generators: skip duplicate pairs
                    if depth == 2 && j <= i {
                        continue;
                    }
                    next.push(FieldExpr::Bracket(Box::new(v.clone()), Box::new(g.clone())));
                }
            }
            for f in &next {
                vectors.push(f.eval(self, x)?);
            }
            level = next;
        }
        Ok(rank_of(&vectors, self.n))
    }
}

fn b_block(n: usize, r: usize, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut e = DMatrix::identity(n, n);
    if b.shape() == (n - r, r) {
        e.view_mut((r, 0), (n - r, r)).copy_from(b);
    } else {
        // Poison the matrix so the shape error surfaces as a domain error.
        e.fill(f64::NAN);
    }
    e
}

fn condition(e: &DMatrix<f64>) -> f64 {
    let sv = e.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn rank_of(vectors: &[DVector<f64>], n: usize) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let m = DMatrix::from_columns(vectors);
    let sv = m.singular_values();
    let largest = sv.max();
    if largest == 0.0 {
        return 0;
    }
    sv.iter()
        .filter(|&&s| s > RANK_TOLERANCE * largest)
        .count()
        .min(n)
}

/// Symbolic iterated bracket of frame columns, evaluated numerically.
#[derive(Debug, Clone)]
enum FieldExpr {
    Column(usize),
    Bracket(Box<FieldExpr>, Box<FieldExpr>),
}

impl FieldExpr {
    fn eval(&self, frame: &FrameField, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            FieldExpr::Column(a) => Ok(frame.basis(x)?.column(*a).into_owned()),
            FieldExpr::Bracket(u, v) => {
                let (uv, vv) = (u.eval(frame, x)?, v.eval(frame, x)?);
                let (ju, jv) = (u.jacobian(frame, x)?, v.jacobian(frame, x)?);
                Ok(jv * uv - ju * vv)
            }
        }
    }

    fn jacobian(&self, frame: &FrameField, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self {
            FieldExpr::Column(a) => frame.column_jacobian(x, *a),
            FieldExpr::Bracket(..) => {
                let failure = std::cell::RefCell::new(None);
                let jac = diff::jacobian(
                    |p| match self.eval(frame, p) {
                        Ok(v) => v,
                        Err(e) => {
                            *failure.borrow_mut() = Some(e);
                            DVector::from_element(frame.n, f64::NAN)
                        }
                    },
                    x,
                    frame.n,
                    diff::SECOND_STEP,
                );
                match failure.into_inner() {
                    Some(e) => Err(e),
                    None => Ok(jac),
                }
            }
        }
    }
}

/// Hamel coefficients of `[e_α, e_β] = C^γ_{αβ} e_γ + C^A_{αβ} e_A` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureCoefficients {
    n: usize,
    r: usize,
    /// `coeffs[(i * r + α) * r + β] = C^i_{αβ}`, `i` over all frame indices.
    coeffs: Vec<f64>,
    pub point: DVector<f64>,
    /// Max-norm residual of the linear solves `E c = [e_α, e_β]`.
    pub solve_residual: f64,
}

impl StructureCoefficients {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    /// `C^i_{αβ}` for any frame index `i` (constrained when `i < r`).
    pub fn get(&self, i: usize, alpha: usize, beta: usize) -> f64 {
        self.coeffs[(i * self.r + alpha) * self.r + beta]
    }

    /// `C^γ_{αβ}`.
    pub fn constrained(&self, gamma: usize, alpha: usize, beta: usize) -> f64 {
        debug_assert!(gamma < self.r);
        self.get(gamma, alpha, beta)
    }

    /// `C^A_{αβ}` with `a` counted from zero among the complement vectors.
    pub fn transversal(&self, a: usize, alpha: usize, beta: usize) -> f64 {
        debug_assert!(a < self.n - self.r);
        self.get(self.r + a, alpha, beta)
    }

    /// `Σ_i C^i_{αβ} e_i` reassembled from the coefficients.
    pub fn bracket_components(&self, alpha: usize, beta: usize) -> DVector<f64> {
        DVector::from_iterator(self.n, (0..self.n).map(|i| self.get(i, alpha, beta)))
    }

    pub fn max_abs_constrained(&self) -> f64 {
        self.max_over(0..self.r)
    }

    /// Largest `|C^A_{αβ}|`; zero exactly when the distribution is
    /// involutive at this point.
    pub fn max_abs_transversal(&self) -> f64 {
        self.max_over(self.r..self.n)
    }

    fn max_over(&self, rows: std::ops::Range<usize>) -> f64 {
        let mut m: f64 = 0.0;
        for i in rows {
            for a in 0..self.r {
                for b in 0..self.r {
                    m = m.max(self.get(i, a, b).abs());
                }
            }
        }
        m
    }
}
