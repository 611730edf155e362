//! Path solvers: index-1 reduction, bounded m-solutions (Algorithms 1 and 2),
//! the closed-form variant and unconstrained runs.

use std::sync::Arc;

use super::config::{Algorithm, EpsilonCheck, RetryRng, Scheme, SolverConfig};
use super::stepper::{euler_step, heun_step, Trajectory};
use super::wiener::{bridge_increments, draw_increments, retry_rng, wiener_path};
use super::yfunc::{coupled_fields, d2_y, gradient_descent_root, y_value, GdControls};
use crate::error::{Result, SdaeError};
use crate::problem::{index1_reduction, CoupledFields, SDAEProblem, YForm};
use crate::{Matrix, Vector};

/// A closed-form root `u(x, b)` of `Y(x, .)`.
pub type ClosedFormU = Arc<dyn Fn(&Vector, f64) -> Result<Vector> + Send + Sync>;

fn x_only_fields(problem: &SDAEProblem, scheme: Scheme, x: &Vector, u: &Vector) -> Result<CoupledFields> {
    let mut f = CoupledFields::zero(x.len(), u.len(), problem.d());
    f.x_drift = match scheme {
        Scheme::HeunStratonovich => problem.stratonovich_drift(x, u)?,
        Scheme::EulerIto => problem.ito_drift(x, u)?,
    };
    f.x_diffusions = problem.sigmas(x, u);
    Ok(f)
}

fn x_step<F>(problem: &SDAEProblem, scheme: Scheme, fields: F, t: f64, x: &Vector, u: &Vector, dw: &[f64], dt: f64) -> Result<Vector>
where
    F: Fn(f64, &Vector, &Vector) -> Result<CoupledFields>,
{
    let (m, n) = (problem.m(), problem.n());
    let (xn, _) = match scheme {
        Scheme::HeunStratonovich => heun_step(m, n, fields, t, x, u, dw, dt)?,
        Scheme::EulerIto => euler_step(m, n, fields, t, x, u, dw, dt)?,
    };
    Ok(xn)
}

/// Largest `b * h` taken in a single stiff step; larger products are split.
pub const MAX_STEP_STIFFNESS: f64 = 1.0;

/// Upper limit on the bridge substeps of one grid step.
pub const MAX_SUBSTEPS: usize = 1 << 12;
/// Largest change in `Y` over a grid step, as a fraction of `b * epsilon`.
pub const Y_DEFECT_FRACTION: f64 = 0.1;

/// Number of bridge substeps (a power of two) for stiffness `b` on step `dt`.
fn substeps(b: f64, dt: f64) -> usize {
    let mut k = 1;
    while b * dt / k as f64 > MAX_STEP_STIFFNESS {
        k *= 2;
    }
    k
}

struct Solver<'a> {
    problem: &'a SDAEProblem,
    closed_form: Option<&'a ClosedFormU>,
    config: &'a SolverConfig,
    form: YForm,
    path_index: u64,
}

impl Solver<'_> {
    fn gd(&self) -> GdControls {
        GdControls { step: self.config.gd_step, scaling: self.config.gd_scaling, tol: self.config.gd_tol, max_iter: self.config.gd_max_iter }
    }

    fn require_heun(&self) -> Result<()> {
        if self.config.scheme != Scheme::HeunStratonovich {
            return Err(SdaeError::SchemeMismatch(format!(
                "{} integrates a Stratonovich system; use heun_stratonovich",
                self.config.algorithm.label()
            )));
        }
        Ok(())
    }

    fn closed_form(&self) -> Result<&ClosedFormU> {
        self.closed_form
            .ok_or_else(|| SdaeError::InvalidConfig(format!("problem {} has no closed-form algebraic variable", self.problem.name)))
    }

    /// Algorithm 2's fallback: advance `X` with `U` frozen, then re-root `U`.
    fn fallback_step(&self, t: f64, x: &Vector, u: &Vector, dw: &[f64], dt: f64, b: f64) -> Result<(Vector, Vector)> {
        let p = self.problem;
        let frozen = u.clone();
        let xn = x_step(p, Scheme::HeunStratonovich, |_, y, _| x_only_fields(p, Scheme::HeunStratonovich, y, &frozen), t, x, u, dw, dt)?;
        match gradient_descent_root(p, self.form, b, &xn, u, self.gd()) {
            Ok(out) => Ok((xn, out.u)),
            Err(SdaeError::NonConvergence { residual, iterations }) => {
                Err(SdaeError::FallbackFailure { t: t + dt, residual, iterations })
            }
            Err(SdaeError::LocalMinimum { residual, .. }) => {
                Err(SdaeError::FallbackFailure { t: t + dt, residual, iterations: self.config.gd_max_iter })
            }
            Err(e) => Err(e),
        }
    }

    fn coupled_step(&self, t: f64, x: &Vector, u: &Vector, dw: &[f64], dt: f64, b: f64) -> Result<(Vector, Vector)> {
        let p = self.problem;
        let guard = self.config.denom_guard;
        heun_step(p.m(), p.n(), |_, y, v| coupled_fields(p, self.form, b, y, v, guard), t, x, u, dw, dt)
    }

    /// One step of the selected bounded-m algorithm.
    fn step(&self, t: f64, x: &Vector, u: &Vector, dw: &[f64], dt: f64, b: f64, traj: &mut Trajectory) -> Result<(Vector, Vector)> {
        let c = self.config;
        match c.algorithm {
            Algorithm::ClosedForm => {
                let cf = self.closed_form()?;
                let p = self.problem;
                let xn = x_step(p, c.scheme, |_, y, _| x_only_fields(p, c.scheme, y, &cf(y, b)?), t, x, u, dw, dt)?;
                let un = cf(&xn, b)?;
                Ok((xn, un))
            }
            Algorithm::Alg2 => {
                let d2 = d2_y(self.problem, self.form, b, x, u)?;
                if d2.norm() > c.d2y_threshold {
                    match self.coupled_step(t, x, u, dw, dt, b) {
                        Err(SdaeError::DegenerateDirection { .. }) => traj.flags.denominator_guards += 1,
                        other => return other,
                    }
                }
                traj.flags.gd_fallbacks += 1;
                self.fallback_step(t, x, u, dw, dt, b)
            }
            _ => match self.coupled_step(t, x, u, dw, dt, b) {
                Err(SdaeError::DegenerateDirection { value }) => {
                    traj.flags.denominator_guards += 1;
                    if !c.degenerate_fallback {
                        return Err(SdaeError::DegenerateDirection { value });
                    }
                    traj.flags.gd_fallbacks += 1;
                    self.fallback_step(t, x, u, dw, dt, b)
                }
                other => other,
            },
        }
    }

    /// One grid step. The step is split on a Brownian bridge when `b * dt`
    /// exceeds [`MAX_STEP_STIFFNESS`]; for the coupled algorithms it is also
    /// refined while the change in `Y` over the step exceeds
    /// [`Y_DEFECT_FRACTION`] of `b * epsilon`.
    #[allow(clippy::too_many_arguments)]
    fn grid_step(
        &self,
        index: usize,
        t: f64,
        x: &Vector,
        u: &Vector,
        dw: &[f64],
        b: f64,
        traj: &mut Trajectory,
    ) -> Result<(Vector, Vector)> {
        let c = self.config;
        let mut k = substeps(b, c.dt);
        if c.algorithm == Algorithm::ClosedForm {
            return self.substepped(index, t, x, u, dw, b, k, traj);
        }
        let band = match self.form {
            YForm::Literal => c.epsilon,
            YForm::SquaredDistance => c.epsilon * c.epsilon,
        };
        let tol = Y_DEFECT_FRACTION * b * band;
        let y0 = y_value(self.problem, self.form, b, x, u)?;
        loop {
            let res = self.substepped(index, t, x, u, dw, b, k, traj);
            if k >= MAX_SUBSTEPS {
                return res;
            }
            match res {
                Ok((xn, un)) => match y_value(self.problem, self.form, b, &xn, &un) {
                    Ok(y) if (y - y0).abs() <= tol => return Ok((xn, un)),
                    Ok(_) | Err(SdaeError::NonFinite(_)) => {}
                    Err(e) => return Err(e),
                },
                Err(SdaeError::NonFinite(_) | SdaeError::DegenerateDirection { .. }) => {}
                Err(e) => return Err(e),
            }
            k *= 2;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn substepped(
        &self,
        index: usize,
        t: f64,
        x: &Vector,
        u: &Vector,
        dw: &[f64],
        b: f64,
        k: usize,
        traj: &mut Trajectory,
    ) -> Result<(Vector, Vector)> {
        let dt = self.config.dt;
        if k == 1 {
            return self.step(t, x, u, dw, dt, b, traj);
        }
        let h = dt / k as f64;
        let pieces = bridge_increments(self.config.seed, self.path_index, index, dw, k, dt);
        let (mut x, mut u) = (x.clone(), u.clone());
        for j in 0..k {
            let piece: Vec<f64> = pieces.row(j).iter().copied().collect();
            (x, u) = self.step(t + j as f64 * h, &x, &u, &piece, h, b, traj)?;
        }
        traj.flags.substeps += k - 1;
        Ok((x, u))
    }

    /// A root of `Y(x, .)` at stiffness `b`, by gradient descent from `guess`.
    fn reroot(&self, t: f64, x: &Vector, guess: &Vector, b: f64) -> Result<Vector> {
        match self.config.algorithm {
            Algorithm::ClosedForm => self.closed_form()?(x, b),
            _ => match gradient_descent_root(self.problem, self.form, b, x, guess, self.gd()) {
                Ok(out) => Ok(out.u),
                Err(SdaeError::NonConvergence { residual, iterations }) => {
                    Err(SdaeError::FallbackFailure { t, residual, iterations })
                }
                Err(SdaeError::LocalMinimum { residual, .. }) => {
                    Err(SdaeError::FallbackFailure { t, residual, iterations: self.config.gd_max_iter })
                }
                Err(e) => Err(e),
            },
        }
    }

    /// Block loop shared by Algorithms 1, 2 and the closed-form variant.
    fn run_bounded(&self, path_index: u64) -> Result<Trajectory> {
        let c = self.config;
        if c.algorithm != Algorithm::ClosedForm {
            self.require_heun()?;
        }
        let p = self.problem;
        let (n_steps, d) = (c.n_steps(), p.d());
        let path = wiener_path(c.seed, path_index, d, n_steps, c.dt);
        let mut fresh = retry_rng(c.seed, path_index);
        let mut b = c.b0;
        let mut x = p.initial_state.clone();
        let mut u = self.reroot(0.0, &x, &self.problem.initial_guess(), b)?;
        let mut traj = Trajectory::default();
        traj.push(0.0, x.clone(), u.clone(), p.h_dist(&x, &u)?, b);

        let mut step = 0;
        while step < n_steps {
            let end = (step + c.inner_steps).min(n_steps);
            let (x_start, mut u_start, len_start) = (x.clone(), u.clone(), traj.len());
            let mut incs: Matrix = path.increments.rows(step, end - step).into_owned();
            loop {
                match self.run_block(step, &incs, &x_start, &u_start, b, &mut traj) {
                    Ok((xe, ue)) if p.h_dist(&xe, &ue)? <= c.epsilon => {
                        x = xe;
                        u = ue;
                        break;
                    }
                    Ok(_) | Err(SdaeError::NonFinite(_)) => {}
                    Err(e) => return Err(e),
                }
                b *= 2.0;
                traj.flags.doublings += 1;
                if b > c.b_cap {
                    return Err(SdaeError::Stiffness { t: step as f64 * c.dt, b, cap: c.b_cap });
                }
                traj.truncate(len_start);
                u_start = self.reroot(step as f64 * c.dt, &x_start, &u_start, b)?;
                traj.truncate(len_start - 1);
                traj.push(step as f64 * c.dt, x_start.clone(), u_start.clone(), p.h_dist(&x_start, &u_start)?, b);
                if c.retry_rng == RetryRng::Fresh {
                    incs = draw_increments(&mut fresh, d, end - step, c.dt);
                }
            }
            step = end;
        }
        traj.count_violations(c.epsilon);
        Ok(traj)
    }

    fn run_block(
        &self,
        first: usize,
        incs: &Matrix,
        x0: &Vector,
        u0: &Vector,
        b: f64,
        traj: &mut Trajectory,
    ) -> Result<(Vector, Vector)> {
        let dt = self.config.dt;
        let (mut x, mut u) = (x0.clone(), u0.clone());
        for i in 0..incs.nrows() {
            let t = (first + i) as f64 * dt;
            let dw: Vec<f64> = incs.row(i).iter().copied().collect();
            let (xn, un) = self.grid_step(first + i, t, &x, &u, &dw, b, traj)?;
            x = xn;
            u = un;
            let h = self.problem.h_dist(&x, &u)?;
            if !h.is_finite() {
                return Err(SdaeError::NonFinite(format!("constraint distance at t = {}", t + dt)));
            }
            traj.push((first + i + 1) as f64 * dt, x.clone(), u.clone(), h, b);
            if h > self.config.epsilon && self.config.epsilon_check == EpsilonCheck::EveryStep {
                break;
            }
        }
        Ok((x, u))
    }

    fn run_index1(&self, path_index: u64) -> Result<Trajectory> {
        self.require_heun()?;
        let c = self.config;
        let p = self.problem;
        let red = index1_reduction(p);
        let path = wiener_path(c.seed, path_index, p.d(), c.n_steps(), c.dt);
        let mut x = p.initial_state.clone();
        let mut u = index1_initial_u(p, &x)?;
        let mut traj = Trajectory::default();
        traj.push(0.0, x.clone(), u.clone(), p.h_dist(&x, &u)?, c.b0);
        for i in 0..path.n_steps() {
            let t = i as f64 * c.dt;
            let (xn, un) = heun_step(p.m(), p.n(), |_, y, v| red.eval(y, v), t, &x, &u, &path.increment(i), c.dt)?;
            x = xn;
            u = un;
            traj.push(t + c.dt, x.clone(), u.clone(), p.h_dist(&x, &u)?, c.b0);
        }
        traj.count_violations(c.epsilon);
        Ok(traj)
    }

    fn run_unconstrained(&self, path_index: u64) -> Result<Trajectory> {
        let c = self.config;
        let p = self.problem;
        let path = wiener_path(c.seed, path_index, p.d(), c.n_steps(), c.dt);
        let u0 = p.initial_guess();
        let mut x = p.initial_state.clone();
        let mut traj = Trajectory::default();
        traj.push(0.0, x.clone(), u0.clone(), p.h_dist(&x, &u0)?, c.b0);
        for i in 0..path.n_steps() {
            let t = i as f64 * c.dt;
            x = x_step(p, c.scheme, |_, y, v| x_only_fields(p, c.scheme, y, v), t, &x, &u0, &path.increment(i), c.dt)?;
            traj.push(t + c.dt, x.clone(), u0.clone(), p.h_dist(&x, &u0)?, c.b0);
        }
        traj.count_violations(c.epsilon);
        Ok(traj)
    }
}

/// Newton iteration for `h(x, u) = p` in `u` from the problem's initial guess.
pub fn index1_initial_u(problem: &SDAEProblem, x: &Vector) -> Result<Vector> {
    let n = problem.n();
    let mut u = problem.initial_guess();
    for _ in 0..50 {
        let r = problem.h(x, &u)? - &problem.target;
        if r.norm() <= 1e-13 {
            return Ok(u);
        }
        let d2 = problem.constraint.d2(n, x, &u)?;
        let step = d2.lu().solve(&r).ok_or(SdaeError::SingularConstraint { condition: f64::INFINITY })?;
        u = n.retract_ambient(&(&u - n.tangent_basis(&u) * step))?;
    }
    let r = (problem.h(x, &u)? - &problem.target).norm();
    if r <= 1e-10 {
        Ok(u)
    } else {
        Err(SdaeError::NonConvergence { residual: r, iterations: 50 })
    }
}

/// Solve one path of `problem` with the algorithm selected in `config`.
pub fn solve_path(
    problem: &SDAEProblem,
    closed_form: Option<&ClosedFormU>,
    config: &SolverConfig,
    path_index: u64,
) -> Result<Trajectory> {
    config.validate()?;
    let solver = Solver { problem, closed_form, config, form: config.y_form.unwrap_or(problem.y_form), path_index };
    match config.algorithm {
        Algorithm::Index1 => solver.run_index1(path_index),
        Algorithm::Unconstrained => solver.run_unconstrained(path_index),
        Algorithm::Alg1 | Algorithm::Alg2 | Algorithm::ClosedForm => solver.run_bounded(path_index),
    }
}

/// Algorithm 1 on path `path_index`.
pub fn algorithm1(problem: &SDAEProblem, config: &SolverConfig, path_index: u64) -> Result<Trajectory> {
    solve_path(problem, None, &SolverConfig { algorithm: Algorithm::Alg1, ..config.clone() }, path_index)
}

/// Algorithm 2 on path `path_index`.
pub fn algorithm2(problem: &SDAEProblem, config: &SolverConfig, path_index: u64) -> Result<Trajectory> {
    solve_path(problem, None, &SolverConfig { algorithm: Algorithm::Alg2, ..config.clone() }, path_index)
}
