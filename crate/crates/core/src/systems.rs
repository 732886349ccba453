//! Built-in systems, complete solutions, and closed-form references.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::complete::{CompleteSolution, Flavor};
use crate::frame::FrameField;
use crate::hj::SectionFamily;
use crate::lagrangian::{LagrangianDef, LagrangianDerivatives};
use crate::system::NonholonomicSystem;

pub const FREE_PARTICLE: &str = "free-particle-nonholonomic";
pub const HOLONOMIC_PLANE: &str = "holonomic-plane";
pub const DEGENERATE_PLANE: &str = "degenerate-plane";

pub const SYSTEM_NAMES: &[&str] = &[FREE_PARTICLE, HOLONOMIC_PLANE, DEGENERATE_PLANE];

pub const FREE_PARTICLE_RESTRICTED: &str = "free-particle-restricted";
pub const FREE_PARTICLE_GENERAL: &str = "free-particle-general";

pub const FAMILY_NAMES: &[&str] = &[FREE_PARTICLE_RESTRICTED, FREE_PARTICLE_GENERAL];

pub fn builtin_system(name: &str) -> Option<NonholonomicSystem> {
    match name {
        FREE_PARTICLE => Some(free_particle()),
        HOLONOMIC_PLANE => Some(holonomic_plane()),
        DEGENERATE_PLANE => Some(degenerate_plane()),
        _ => None,
    }
}

/// A built-in complete solution and the system it belongs to.
pub fn builtin_complete_solution(name: &str) -> Option<(&'static str, CompleteSolution)> {
    match name {
        FREE_PARTICLE_RESTRICTED => Some((FREE_PARTICLE, free_particle_sqrt_family())),
        FREE_PARTICLE_GENERAL => Some((FREE_PARTICLE, free_particle_affine_family())),
        _ => None,
    }
}

/// `L = ½|ẋ|²` on `R^n` with analytic derivatives.
pub fn kinetic_lagrangian() -> LagrangianDef {
    LagrangianDef::new(|_, v| 0.5 * v.norm_squared()).with_derivatives(LagrangianDerivatives {
        grad_x: Arc::new(|x, _| DVector::zeros(x.len())),
        grad_v: Arc::new(|_, v| v.clone()),
        hess_vv: Arc::new(|x, _| DMatrix::identity(x.len(), x.len())),
        hess_vx: Arc::new(|x, _| DMatrix::zeros(x.len(), x.len())),
    })
}

/// A free particle in `R^3` subject to `ẋ3 = x2 ẋ1`, with frame
/// `e_1 = ∂1 + x2 ∂3`, `e_2 = ∂2`, `e_3 = ∂3`.
pub fn free_particle() -> NonholonomicSystem {
    let frame = FrameField::from_b_with_partials(
        3,
        2,
        |x| DMatrix::from_row_slice(1, 2, &[x[1], 0.0]),
        |_, k| DMatrix::from_row_slice(1, 2, &[if k == 1 { 1.0 } else { 0.0 }, 0.0]),
    )
    .expect("valid frame dimensions");
    NonholonomicSystem::new(FREE_PARTICLE, frame, kinetic_lagrangian())
}

/// A free particle in `R^3` confined to move parallel to the `x1 x2` plane.
pub fn holonomic_plane() -> NonholonomicSystem {
    let frame = FrameField::identity(3, 2).expect("valid frame dimensions");
    NonholonomicSystem::new(HOLONOMIC_PLANE, frame, kinetic_lagrangian())
}

/// `L = ½ẋ1²` on `R^2` with `D = span{∂2}`: `G^{LD}` vanishes identically.
pub fn degenerate_plane() -> NonholonomicSystem {
    let frame = FrameField::new(2, 1, |_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))
        .expect("valid frame dimensions")
        .with_partials(|_, _| DMatrix::zeros(2, 2));
    let lagrangian = LagrangianDef::new(|_, v| 0.5 * v[0] * v[0]).with_derivatives(LagrangianDerivatives {
        grad_x: Arc::new(|_, _| DVector::zeros(2)),
        grad_v: Arc::new(|_, v| DVector::from_row_slice(&[v[0], 0.0])),
        hess_vv: Arc::new(|_, _| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])),
        hess_vx: Arc::new(|_, _| DMatrix::zeros(2, 2)),
    });
    NonholonomicSystem::new(DEGENERATE_PLANE, frame, lagrangian)
}

/// A harmonic oscillator on `R^2` restricted to the line field
/// `e_1 = ∂1 + x1 ∂2`. Rank one, so every constraint is integrable.
pub fn single_direction() -> NonholonomicSystem {
    let frame = FrameField::from_b(2, 1, |x| DMatrix::from_element(1, 1, x[0])).expect("valid frame dimensions");
    let lagrangian = LagrangianDef::new(|x, v| 0.5 * v.norm_squared() - 0.5 * x.norm_squared());
    NonholonomicSystem::new("single-direction", frame, lagrangian)
}

fn hyp(x2: f64) -> f64 {
    1.0 + x2 * x2
}

/// Closed-form `f^α` of the free particle:
/// `ẏ1 = −x2 y1 y2 / (1 + x2²)`, `ẏ2 = 0`.
pub fn free_particle_accel(x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    DVector::from_row_slice(&[-x[1] / hyp(x[1]) * y[0] * y[1], 0.0])
}

/// Complete solution `σ_λ = (λ2 / √(1 + x2²), λ1)`, a restricted one.
/// Its inverse is `F = (y2, y1 √(1 + x2²))`.
pub fn free_particle_sqrt_family() -> CompleteSolution {
    let family = SectionFamily::new(3, 2, |x, l| {
        DVector::from_row_slice(&[l[1] / hyp(x[1]).sqrt(), l[0]])
    })
    .with_jacobians(
        |x, l| {
            let mut j = DMatrix::zeros(2, 3);
            j[(0, 1)] = -l[1] * x[1] / hyp(x[1]).powf(1.5);
            j
        },
        |x, _| DMatrix::from_row_slice(2, 2, &[0.0, 1.0 / hyp(x[1]).sqrt(), 1.0, 0.0]),
    );
    CompleteSolution::new(family, Flavor::Restricted)
        .with_inverse(|x, y| DVector::from_row_slice(&[y[1], y[0] * hyp(x[1]).sqrt()]))
        .with_inverse_jacobian(|x, y| {
            let s = hyp(x[1]).sqrt();
            let mut jx = DMatrix::zeros(2, 3);
            jx[(1, 1)] = y[0] * x[1] / s;
            (jx, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, s, 0.0]))
        })
}

/// Complete solution `σ_λ = ((λ1 x3 − λ2) / (1 + x2²), λ1)`, which solves
/// only the general problem. Its inverse is `F = (y2, x3 y2 − y1 (1 + x2²))`.
pub fn free_particle_affine_family() -> CompleteSolution {
    let family = SectionFamily::new(3, 2, |x, l| {
        DVector::from_row_slice(&[(l[0] * x[2] - l[1]) / hyp(x[1]), l[0]])
    })
    .with_jacobians(
        |x, l| {
            let h = hyp(x[1]);
            let mut j = DMatrix::zeros(2, 3);
            j[(0, 1)] = -2.0 * x[1] * (l[0] * x[2] - l[1]) / (h * h);
            j[(0, 2)] = l[0] / h;
            j
        },
        |x, _| {
            let h = hyp(x[1]);
            DMatrix::from_row_slice(2, 2, &[x[2] / h, -1.0 / h, 1.0, 0.0])
        },
    );
    CompleteSolution::new(family, Flavor::General)
        .with_inverse(|x, y| DVector::from_row_slice(&[y[1], x[2] * y[1] - y[0] * hyp(x[1])]))
        .with_inverse_jacobian(|x, y| {
            let mut jx = DMatrix::zeros(2, 3);
            jx[(1, 1)] = -2.0 * x[1] * y[0];
            jx[(1, 2)] = y[1];
            (jx, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -hyp(x[1]), x[2]]))
        })
}

/// Position at time `t` along the integral curve of `σ_λ` from
/// [`free_particle_sqrt_family`] starting at `x0`.
pub fn free_particle_flow(x0: &DVector<f64>, lambda: &[f64], t: f64) -> DVector<f64> {
    let (l1, l2) = (lambda[0], lambda[1]);
    let x20 = x0[1];
    if l1 != 0.0 {
        let x2 = x20 + l1 * t;
        DVector::from_row_slice(&[
            x0[0] + l2 / l1 * (x2.asinh() - x20.asinh()),
            x2,
            x0[2] + l2 / l1 * (hyp(x2).sqrt() - hyp(x20).sqrt()),
        ])
    } else {
        let s = hyp(x20).sqrt();
        DVector::from_row_slice(&[x0[0] + l2 / s * t, x20, x0[2] + l2 * x20 / s * t])
    }
}
