//! Fixed-step classical Runge–Kutta integration.

use nalgebra::DVector;
use thiserror::Error;

use crate::dynamics::sode_rhs;
use crate::error::{Error, Result};
use crate::system::{ConstrainedState, NonholonomicSystem};

/// Sampled solution of the constrained dynamics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ConstrainedState>,
    /// `E_L` at each sample.
    pub energy: Vec<f64>,
    /// First-integral values per sample; empty unless attached.
    pub integrals: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &ConstrainedState)> {
        self.times.last().copied().zip(self.states.last())
    }

    /// `max_t |E(t) − E(0)|`.
    pub fn energy_drift(&self) -> f64 {
        drift(&self.energy)
    }

    /// Per-integral `max_t |f_i(t) − f_i(0)|`.
    pub fn integral_drifts(&self) -> Vec<f64> {
        let Some(first) = self.integrals.first() else {
            return Vec::new();
        };
        (0..first.len())
            .map(|i| {
                let series: Vec<f64> = self.integrals.iter().map(|row| row[i]).collect();
                drift(&series)
            })
            .collect()
    }

    fn push(&mut self, t: f64, s: ConstrainedState, energy: f64) {
        self.times.push(t);
        self.states.push(s);
        self.energy.push(energy);
    }
}

fn drift(series: &[f64]) -> f64 {
    match series.first() {
        Some(&v0) => series.iter().fold(0.0, |m, v| m.max((v - v0).abs())),
        None => 0.0,
    }
}

/// Integration stopped early; `partial` holds every sample computed so far.
#[derive(Debug, Clone, Error)]
#[error("integration failed after {} samples: {error}", partial.len())]
pub struct IntegrationFailure {
    pub partial: Trajectory,
    pub error: Error,
}

impl From<IntegrationFailure> for Error {
    fn from(f: IntegrationFailure) -> Self {
        let time = f.partial.times.last().copied().unwrap_or(0.0);
        Error::Integration {
            time,
            reason: Box::new(f.error),
        }
    }
}

/// Sample times `0, dt, 2dt, …, T`. The last step is shortened so that the
/// final sample lands exactly on `T`; times are `k·dt`, never accumulated.
pub fn step_schedule(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "duration must be non-negative, got {t_end}"
        )));
    }
    let slack = 1e-9 * dt;
    let full = ((t_end + slack) / dt).floor() as usize;
    let mut times: Vec<f64> = (0..=full).map(|k| k as f64 * dt).collect();
    let last = times[times.len() - 1];
    if (t_end - last).abs() <= slack {
        *times.last_mut().unwrap() = t_end;
    } else {
        times.push(t_end);
    }
    Ok(times)
}

/// One classical RK4 step of `ż = rhs(z)`.
pub fn rk4_step<F>(rhs: &F, z: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = rhs(z)?;
    let k2 = rhs(&(z + &k1 * (h / 2.0)))?;
    let k3 = rhs(&(z + &k2 * (h / 2.0)))?;
    let k4 = rhs(&(z + &k3 * h))?;
    Ok(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Samples of an ODE solve; on failure, the samples reached and the cause.
pub type OdeSamples = std::result::Result<Vec<DVector<f64>>, (Vec<DVector<f64>>, Error)>;

/// Integrates an autonomous ODE on the given schedule, returning every sample.
/// On failure the samples reached so far are returned alongside the error.
pub fn integrate_ode<F>(
    rhs: F,
    z0: DVector<f64>,
    times: &[f64],
) -> OdeSamples
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut out = Vec::with_capacity(times.len());
    out.push(z0);
    for w in times.windows(2) {
        let z = out.last().unwrap();
        match rk4_step(&rhs, z, w[1] - w[0]) {
            Ok(next) if next.iter().all(|v| v.is_finite()) => out.push(next),
            Ok(_) => return Err((out, Error::NumericDomain("integrator state".into()))),
            Err(e) => return Err((out, e)),
        }
    }
    Ok(out)
}

/// Integrates the constrained dynamics from `s0` for duration `t_end` with
/// fixed step `dt`, recording the energy at every sample.
#[allow(clippy::result_large_err)]
pub fn integrate(
    system: &NonholonomicSystem,
    s0: &ConstrainedState,
    t_end: f64,
    dt: f64,
) -> std::result::Result<Trajectory, IntegrationFailure> {
    let fail = |partial, error| IntegrationFailure { partial, error };
    let times = step_schedule(t_end, dt).map_err(|e| fail(Trajectory::default(), e))?;
    s0.validate(system).map_err(|e| fail(Trajectory::default(), e))?;
    let n = system.dim();
    let rhs = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let s = ConstrainedState::from_vector(z, n);
        let (xdot, ydot) = sode_rhs(system, &s)?;
        let mut dz = DVector::zeros(z.len());
        dz.rows_mut(0, n).copy_from(&xdot);
        dz.rows_mut(n, ydot.len()).copy_from(&ydot);
        Ok(dz)
    };
    let ql = system.quasi();
    let (samples, failure) = match integrate_ode(rhs, s0.to_vector(), &times) {
        Ok(samples) => (samples, None),
        Err((samples, e)) => (samples, Some(e)),
    };
    let mut traj = Trajectory::default();
    for (t, z) in times.iter().zip(&samples) {
        let s = ConstrainedState::from_vector(z, n);
        match ql.energy(&s.x, &s.y) {
            Ok(e) => traj.push(*t, s, e),
            Err(e) => return Err(fail(traj, e)),
        }
    }
    match failure {
        Some(e) => Err(fail(traj, e)),
        None => Ok(traj),
    }
}
