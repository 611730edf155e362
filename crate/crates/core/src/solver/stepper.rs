use serde::Serialize;

use super::config::Scheme;
use super::wiener::WienerPath;
use crate::error::{Result, SdaeError};
use crate::geometry::EmbeddedManifold;
use crate::problem::{CoupledFields, SDAEProblem};
use crate::Vector;

/// Event counters collected along a trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrajectoryFlags {
    /// Recorded points with `Delta_p(h) > epsilon`.
    pub violations: usize,
    /// Steps taken by the gradient-descent fallback.
    pub gd_fallbacks: usize,
    /// Degenerate-direction guards hit (including those routed to the fallback).
    pub denominator_guards: usize,
    /// Number of times `b` was doubled.
    pub doublings: usize,
    /// Extra bridge substeps taken on stiff grid steps.
    pub substeps: usize,
}

/// A sampled solution path `(t, X_t, U_t)` with constraint diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    pub u: Vec<Vector>,
    pub h_dist: Vec<f64>,
    pub b_history: Vec<f64>,
    pub flags: TrajectoryFlags,
}

impl Trajectory {
    pub fn push(&mut self, t: f64, x: Vector, u: Vector, h_dist: f64, b: f64) {
        self.times.push(t);
        self.x.push(x);
        self.u.push(u);
        self.h_dist.push(h_dist);
        self.b_history.push(b);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn truncate(&mut self, len: usize) {
        self.times.truncate(len);
        self.x.truncate(len);
        self.u.truncate(len);
        self.h_dist.truncate(len);
        self.b_history.truncate(len);
    }

    pub fn sup_h_dist(&self) -> f64 {
        self.h_dist.iter().copied().fold(0.0, f64::max)
    }

    pub fn final_b(&self) -> f64 {
        self.b_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn count_violations(&mut self, epsilon: f64) {
        self.flags.violations = self.h_dist.iter().filter(|&&h| h > epsilon).count();
    }
}

fn increment(f: &CoupledFields, dw: &[f64], dt: f64) -> (Vector, Vector) {
    let mut dx = &f.x_drift * dt;
    let mut du = &f.u_drift * dt;
    for (l, w) in dw.iter().enumerate() {
        dx += &f.x_diffusions[l] * *w;
        du += &f.u_diffusions[l] * *w;
    }
    (dx, du)
}

fn check_finite(x: &Vector, u: &Vector) -> Result<()> {
    if x.iter().chain(u.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SdaeError::NonFinite("state left the finite range".into()))
    }
}

/// Retract ambient candidates, rejecting non-finite ones first.
fn advance(m: &dyn EmbeddedManifold, n: &dyn EmbeddedManifold, x: Vector, u: Vector) -> Result<(Vector, Vector)> {
    check_finite(&x, &u)?;
    let (x, u) = (m.retract_ambient(&x)?, n.retract_ambient(&u)?);
    check_finite(&x, &u)?;
    Ok((x, u))
}

/// One Stratonovich-Heun step of a coupled system on `M x N`: Euler predictor,
/// trapezoidal corrector, each followed by retraction. `fields` receives the
/// stage time and point.
pub fn heun_step<F>(
    m: &dyn EmbeddedManifold,
    n: &dyn EmbeddedManifold,
    fields: F,
    t: f64,
    x: &Vector,
    u: &Vector,
    dw: &[f64],
    dt: f64,
) -> Result<(Vector, Vector)>
where
    F: Fn(f64, &Vector, &Vector) -> Result<CoupledFields>,
{
    let f0 = fields(t, x, u)?;
    let (dx0, du0) = increment(&f0, dw, dt);
    let (xp, up) = advance(m, n, x + &dx0, u + &du0)?;
    let f1 = fields(t + dt, &xp, &up)?;
    let (dx1, du1) = increment(&f1, dw, dt);
    advance(m, n, x + (dx0 + dx1) * 0.5, u + (du0 + du1) * 0.5)
}

/// One Euler-Maruyama step with retraction; `fields` must carry Ito drifts.
pub fn euler_step<F>(
    m: &dyn EmbeddedManifold,
    n: &dyn EmbeddedManifold,
    fields: F,
    t: f64,
    x: &Vector,
    u: &Vector,
    dw: &[f64],
    dt: f64,
) -> Result<(Vector, Vector)>
where
    F: Fn(f64, &Vector, &Vector) -> Result<CoupledFields>,
{
    let f0 = fields(t, x, u)?;
    let (dx, du) = increment(&f0, dw, dt);
    advance(m, n, x + dx, u + du)
}

/// The algebraic variable as a given function of time and state.
pub type UProcess<'a> = &'a (dyn Fn(f64, &Vector) -> Result<Vector> + Sync);

/// Integrate the intrinsic SDE `dX = V dt + sigma_l dW^l` for a prescribed
/// `U_t = u_process(t, X_t)`, in the representation matching `scheme`.
pub fn integrate_intrinsic(
    problem: &SDAEProblem,
    u_process: UProcess<'_>,
    path: &WienerPath,
    scheme: Scheme,
    x0: &Vector,
) -> Result<Trajectory> {
    let (m, n) = (problem.m(), problem.n());
    if scheme == Scheme::EulerIto && !m.has_connection() {
        return Err(SdaeError::SchemeMismatch(format!("Ito scheme needs a connection on {}", m.name())));
    }
    let (qn, d) = (n.ambient_dim(), problem.d());
    let fields = |t: f64, x: &Vector, _u: &Vector| -> Result<CoupledFields> {
        let u = u_process(t, x)?;
        let x_drift = match scheme {
            Scheme::HeunStratonovich => problem.stratonovich_drift(x, &u)?,
            Scheme::EulerIto => problem.ito_drift(x, &u)?,
        };
        let mut f = CoupledFields::zero(x.len(), qn, d);
        f.x_drift = x_drift;
        f.x_diffusions = problem.sigmas(x, &u);
        Ok(f)
    };
    let dt = path.dt;
    let mut traj = Trajectory::default();
    let mut x = x0.clone();
    let mut u = u_process(0.0, &x)?;
    traj.push(0.0, x.clone(), u.clone(), problem.h_dist(&x, &u)?, f64::NAN);
    for i in 0..path.n_steps() {
        let t = i as f64 * dt;
        let dw = path.increment(i);
        let (xn, _) = match scheme {
            Scheme::HeunStratonovich => heun_step(m, n, fields, t, &x, &u, &dw, dt)?,
            Scheme::EulerIto => euler_step(m, n, fields, t, &x, &u, &dw, dt)?,
        };
        x = xn;
        let tn = (i + 1) as f64 * dt;
        u = u_process(tn, &x)?;
        traj.push(tn, x.clone(), u.clone(), problem.h_dist(&x, &u)?, f64::NAN);
    }
    Ok(traj)
}
