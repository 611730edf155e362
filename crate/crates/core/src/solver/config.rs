use serde::{Deserialize, Serialize};

use crate::error::{Result, SdaeError};
use crate::problem::YForm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    HeunStratonovich,
    EulerIto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetryRng {
    /// Re-run a failed block with its original Wiener increments.
    Reuse,
    /// Draw new increments for each re-run from a separate stream.
    Fresh,
}

/// Initial trial step of each gradient-descent iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdScaling {
    /// Start the Armijo search at `gd_step`.
    Fixed,
    /// Start at the Gauss-Newton step `1 / (2 |D_2 Y|^2)`.
    GaussNewton,
}

/// Where the `epsilon` test of the b-doubling loop is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonCheck {
    /// Re-run a block if any of its steps leaves the `epsilon` band.
    EveryStep,
    /// Test only the state at the end of each block.
    BlockEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Coupled system from the index-1 reduction.
    Index1,
    /// Bounded m-solution with b-doubling.
    Alg1,
    /// Algorithm 1 with a gradient-descent fallback where `D_2 Y` vanishes.
    Alg2,
    /// `U` from a closed-form root of `Y(x, .)` inside the same b-doubling loop.
    ClosedForm,
    /// `U` held at its initial value; no constraint enforcement.
    Unconstrained,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Index1 => "index1",
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
            Algorithm::ClosedForm => "closed-form",
            Algorithm::Unconstrained => "unconstrained",
        }
    }
}

/// Controls for every solver entry point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub dt: f64,
    pub t_final: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub b0: f64,
    pub b_cap: f64,
    pub inner_steps: usize,
    pub gd_step: f64,
    pub gd_tol: f64,
    pub gd_max_iter: usize,
    pub gd_scaling: GdScaling,
    pub d2y_threshold: f64,
    pub denom_guard: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub n_paths: usize,
    pub retry_rng: RetryRng,
    pub epsilon_check: EpsilonCheck,
    /// Overrides the problem's Y-function form when set.
    pub y_form: Option<YForm>,
    /// Let Algorithm 1 hand degenerate steps to the Algorithm 2 fallback.
    pub degenerate_fallback: bool,
    pub lambda_estimate: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Alg1,
            dt: 1e-3,
            t_final: 1.0,
            epsilon: 0.1,
            alpha: 0.05,
            b0: 1.0,
            b_cap: 1_048_576.0,
            inner_steps: 10,
            gd_step: 0.1,
            gd_tol: 1e-8,
            gd_max_iter: 200,
            gd_scaling: GdScaling::GaussNewton,
            d2y_threshold: 1e-8,
            denom_guard: 1e-10,
            scheme: Scheme::HeunStratonovich,
            seed: 0,
            n_paths: 1,
            retry_rng: RetryRng::Reuse,
            epsilon_check: EpsilonCheck::EveryStep,
            y_form: None,
            degenerate_fallback: false,
            lambda_estimate: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SdaeError::InvalidConfig(msg.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("t_final must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.b0 > 0.0 && self.b0.is_finite()) {
            return bad("b0 must be positive");
        }
        if !(self.b_cap >= self.b0) {
            return bad("b_cap must be at least b0");
        }
        if self.inner_steps == 0 {
            return bad("inner_steps must be at least 1");
        }
        if self.n_paths == 0 {
            return bad("paths must be at least 1");
        }
        if !(self.gd_step > 0.0 && self.gd_tol > 0.0 && self.d2y_threshold >= 0.0 && self.denom_guard >= 0.0) {
            return bad("gradient-descent controls and guards must be positive");
        }
        Ok(())
    }

    /// Number of steps covering `[0, t_final]`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }
}
