use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::algorithms::{solve_path, ClosedFormU};
use super::config::SolverConfig;
use super::stepper::Trajectory;
use super::yfunc::lambda_integrand;
use crate::error::{Result, SdaeError};
use crate::problem::SDAEProblem;

/// Empirical constraint statistics over an ensemble of paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleDiagnostics {
    pub problem: String,
    pub algorithm: String,
    pub n_paths: usize,
    pub n_failed: usize,
    pub epsilon: f64,
    pub alpha: f64,
    /// Fraction of paths with `sup_t Delta_p(h) > epsilon`; failed paths count as violating.
    pub violation_fraction: f64,
    pub sup_h_dist: Vec<Option<f64>>,
    pub final_b: Vec<Option<f64>>,
    pub doublings: Vec<Option<usize>>,
    pub gd_fallbacks: usize,
    pub failures: Vec<Option<String>>,
    /// Sup over visited points of `sum_l (sigma_l[Delta_p^2 o h])^2`.
    pub lambda_estimate: Option<f64>,
    /// `lambda / (alpha epsilon^4)`.
    pub b_bound_stated: Option<f64>,
    /// `lambda / (2 alpha epsilon^2)`.
    pub b_bound_derived: Option<f64>,
}

/// Diagnostics plus the per-path products of an ensemble run.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub diagnostics: EnsembleDiagnostics,
    pub trajectories: Vec<Result<Trajectory>>,
    /// Wall-clock seconds per path.
    pub runtimes: Vec<f64>,
}

/// Fraction of entries above `epsilon`; `None` (a failed path) counts as above.
pub fn violation_fraction(sups: &[Option<f64>], epsilon: f64) -> f64 {
    if sups.is_empty() {
        return 0.0;
    }
    sups.iter().filter(|s| s.map_or(true, |v| v > epsilon)).count() as f64 / sups.len() as f64
}

/// Run `config.n_paths` independent paths (in parallel) and reduce by path index.
pub fn run_ensemble(problem: &SDAEProblem, closed_form: Option<&ClosedFormU>, config: &SolverConfig) -> Result<EnsembleRun> {
    config.validate()?;
    let results: Vec<(Result<Trajectory>, f64)> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let start = Instant::now();
            let r = solve_path(problem, closed_form, config, i);
            (r, start.elapsed().as_secs_f64())
        })
        .collect();
    let (trajectories, runtimes): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    if let Some(Err(e)) = trajectories.iter().find(|r| r.is_err()).filter(|_| trajectories.iter().all(|r| r.is_err())) {
        return Err(e.clone());
    }

    let sup_h_dist: Vec<Option<f64>> = trajectories.iter().map(|r| r.as_ref().ok().map(|t| t.sup_h_dist())).collect();
    let lambda_estimate = if config.lambda_estimate {
        let mut sup = 0.0f64;
        for t in trajectories.iter().flatten() {
            for (x, u) in t.x.iter().zip(&t.u) {
                sup = sup.max(lambda_integrand(problem, x, u)?);
            }
        }
        Some(sup)
    } else {
        None
    };
    let (eps, alpha) = (config.epsilon, config.alpha);
    let diagnostics = EnsembleDiagnostics {
        problem: problem.name.clone(),
        algorithm: config.algorithm.label().to_string(),
        n_paths: config.n_paths,
        n_failed: trajectories.iter().filter(|r| r.is_err()).count(),
        epsilon: eps,
        alpha,
        violation_fraction: violation_fraction(&sup_h_dist, eps),
        final_b: trajectories.iter().map(|r| r.as_ref().ok().map(|t| t.final_b())).collect(),
        doublings: trajectories.iter().map(|r| r.as_ref().ok().map(|t| t.flags.doublings)).collect(),
        gd_fallbacks: trajectories.iter().flatten().map(|t| t.flags.gd_fallbacks).sum(),
        failures: trajectories.iter().map(|r| r.as_ref().err().map(|e: &SdaeError| e.to_string())).collect(),
        sup_h_dist,
        lambda_estimate,
        b_bound_stated: lambda_estimate.map(|l| l / (alpha * eps.powi(4))),
        b_bound_derived: lambda_estimate.map(|l| l / (2.0 * alpha * eps * eps)),
    };
    Ok(EnsembleRun { diagnostics, trajectories, runtimes })
}
