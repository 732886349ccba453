//! Central finite-difference kernels.
//!
//! Steps scale with the magnitude of the coordinate being perturbed:
//! `h = base * max(1, |c|)`. First derivatives use [`FIRST_STEP`], second
//! derivatives use nested central differences with [`SECOND_STEP`].

use nalgebra::{DMatrix, DVector};

/// Base step for first derivatives.
pub const FIRST_STEP: f64 = 1e-6;
/// Base step for nested second derivatives.
pub const SECOND_STEP: f64 = 1e-4;

#[inline]
pub fn step(base: f64, coordinate: f64) -> f64 {
    base * coordinate.abs().max(1.0)
}

/// Gradient of a scalar function.
pub fn gradient<F>(f: F, x: &DVector<f64>, base: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut g = DVector::zeros(x.len());
    let mut probe = x.clone();
    for k in 0..x.len() {
        let h = step(base, x[k]);
        probe[k] = x[k] + h;
        let fp = f(&probe);
        probe[k] = x[k] - h;
        let fm = f(&probe);
        probe[k] = x[k];
        g[k] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Jacobian `J[i][k] = ∂f_i/∂x_k` of a vector function with `m` outputs.
pub fn jacobian<F>(f: F, x: &DVector<f64>, m: usize, base: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut jac = DMatrix::zeros(m, x.len());
    let mut probe = x.clone();
    for k in 0..x.len() {
        let h = step(base, x[k]);
        probe[k] = x[k] + h;
        let fp = f(&probe);
        probe[k] = x[k] - h;
        let fm = f(&probe);
        probe[k] = x[k];
        jac.set_column(k, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Partial derivative of a matrix-valued function along coordinate `k`.
pub fn matrix_partial<F>(f: F, x: &DVector<f64>, k: usize, base: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let h = step(base, x[k]);
    let mut probe = x.clone();
    probe[k] = x[k] + h;
    let fp = f(&probe);
    probe[k] = x[k] - h;
    let fm = f(&probe);
    (fp - fm) / (2.0 * h)
}

/// Mixed second derivatives `H[a][b] = ∂²f/∂u_a ∂w_b` of `f(u, w)` by the
/// four-point central stencil. Passing the same vector for `u` and `w`
/// is not supported; use [`hessian`] for that case.
pub fn mixed_hessian<F>(f: F, u: &DVector<f64>, w: &DVector<f64>, base: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> f64,
{
    let mut h = DMatrix::zeros(u.len(), w.len());
    let mut pu = u.clone();
    let mut pw = w.clone();
    for a in 0..u.len() {
        let ha = step(base, u[a]);
        for b in 0..w.len() {
            let hb = step(base, w[b]);
            let mut eval = |da: f64, db: f64| {
                pu[a] = u[a] + da;
                pw[b] = w[b] + db;
                let v = f(&pu, &pw);
                pu[a] = u[a];
                pw[b] = w[b];
                v
            };
            let v = eval(ha, hb) - eval(ha, -hb) - eval(-ha, hb) + eval(-ha, -hb);
            h[(a, b)] = v / (4.0 * ha * hb);
        }
    }
    h
}

/// Symmetric Hessian of a scalar function by nested central differences.
pub fn hessian<F>(f: F, x: &DVector<f64>, base: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut p = x.clone();
    for a in 0..n {
        let ha = step(base, x[a]);
        for b in a..n {
            let hb = step(base, x[b]);
            let mut eval = |da: f64, db: f64| {
                p[a] += da;
                p[b] += db;
                let v = f(&p);
                p[a] = x[a];
                p[b] = x[b];
                v
            };
            let v = eval(ha, hb) - eval(ha, -hb) - eval(-ha, hb) + eval(-ha, -hb);
            let value = v / (4.0 * ha * hb);
            h[(a, b)] = value;
            h[(b, a)] = value;
        }
    }
    h
}
