use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{ConstraintKind, SDAEProblem};
use crate::diffusion::generator_correction_ambient;
use crate::error::{Result, SdaeError};
use crate::{Matrix, Vector};

/// Smallest-to-largest singular value ratio required for invertibility.
pub const INVERTIBILITY_RATIO: f64 = 1e-8;
/// `||D_2 h||` at or below this counts as "h ignores u".
pub const NULL_DERIVATIVE: f64 = 1e-12;
/// `|D_x h . sigma_l|` above this is an ill-posedness witness.
pub const SPAN_TOL: f64 = 1e-8;

const MAX_SAMPLE_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IndexKind {
    Index1,
    HighIndex,
    CompletelyHighIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IllPosed {
    Yes,
    NoEvidence,
    NotApplicable,
}

impl IllPosed {
    pub fn label(self) -> &'static str {
        match self {
            IllPosed::Yes => "yes",
            IllPosed::NoEvidence => "no-evidence",
            IllPosed::NotApplicable => "not-applicable",
        }
    }
}

/// Diagnostics at one sample point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// `||D_2 h||` in tangent bases (coupled constraints).
    pub d2h_norm: Option<f64>,
    /// Singular value ratio of `D_2 h` (square coupled constraints).
    pub d2h_ratio: Option<f64>,
    /// `|D_x h . sigma_l|` per driver (completely high index).
    pub diffusion_residuals: Vec<f64>,
    /// `|D_x h . (V + 1/2 sum nabla^G_S sigma_l)|` (completely high index).
    pub drift_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexClass {
    pub kind: IndexKind,
    pub ill_posed: IllPosed,
    pub witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellposednessReport {
    pub ill_posed: IllPosed,
    pub witnesses: Vec<Witness>,
}

fn sample_pair(problem: &SDAEProblem, rng: &mut ChaCha8Rng) -> Result<(Vector, Vector)> {
    let w = problem.sample_half_width;
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let x = problem.m().sample_point(rng, w)?;
        let u = problem.n().sample_point(rng, w)?;
        if problem.h(&x, &u).is_ok() {
            return Ok((x, u));
        }
    }
    Err(SdaeError::Sampling(format!("no admissible sample for {} after {MAX_SAMPLE_ATTEMPTS} draws", problem.name)))
}

/// Gauss-Newton projection of `x` onto `{h(., u) = p}` along `T_x M`.
pub fn project_to_constraint(problem: &SDAEProblem, x: &Vector, u: &Vector) -> Result<Vector> {
    let m = problem.m();
    let mut x = x.clone();
    let mut res = f64::INFINITY;
    for _ in 0..60 {
        let r = problem.h(&x, u)? - &problem.target;
        res = r.norm();
        if res <= 1e-12 {
            return Ok(x);
        }
        let basis = m.tangent_basis(&x);
        let j = problem.constraint.d1(m, &x, u)? * &basis;
        let step = j
            .pseudo_inverse(1e-12)
            .map_err(|e| SdaeError::Precondition(e.to_string()))?
            * r;
        x = m.retract_ambient(&(&x - basis * step))?;
    }
    if res <= 1e-9 {
        Ok(x)
    } else {
        Err(SdaeError::NonConvergence { residual: res, iterations: 60 })
    }
}

/// `D_2 h` in orthonormal tangent bases of `N` and `P`.
fn d2h_tangent(problem: &SDAEProblem, x: &Vector, u: &Vector) -> Result<Matrix> {
    let h = problem.h(x, u)?;
    let bp = problem.p().tangent_basis(&h);
    Ok(bp.transpose() * problem.constraint.d2(problem.n(), x, u)?)
}

fn singular_ratio(a: &Matrix) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// Classify the index of `problem` from `n_samples` random points.
pub fn classify(problem: &SDAEProblem, n_samples: usize, seed: u64) -> Result<IndexClass> {
    if n_samples == 0 {
        return Err(SdaeError::InvalidConfig("n_samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n_samples).map(|_| sample_pair(problem, &mut rng)).collect::<Result<Vec<_>>>()?;

    if problem.constraint.kind() == ConstraintKind::StateOnly {
        return completely_high_index(problem, samples);
    }

    let square = problem.p().dim() == problem.n().dim();
    let witnesses = samples
        .par_iter()
        .map(|(x, u)| {
            let d2 = d2h_tangent(problem, x, u)?;
            Ok(Witness {
                x: x.iter().copied().collect(),
                u: u.iter().copied().collect(),
                d2h_norm: Some(d2.norm()),
                d2h_ratio: square.then(|| singular_ratio(&d2)),
                diffusion_residuals: vec![],
                drift_residual: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if witnesses.iter().all(|w| w.d2h_norm.unwrap_or(0.0) <= NULL_DERIVATIVE) {
        return completely_high_index(problem, samples);
    }
    let kind = if square && witnesses.iter().all(|w| w.d2h_ratio.unwrap_or(0.0) > INVERTIBILITY_RATIO) {
        IndexKind::Index1
    } else {
        IndexKind::HighIndex
    };
    Ok(IndexClass { kind, ill_posed: IllPosed::NotApplicable, witnesses })
}

fn completely_high_index(problem: &SDAEProblem, samples: Vec<(Vector, Vector)>) -> Result<IndexClass> {
    let projected = samples
        .into_par_iter()
        .map(|(x, u)| Ok((project_to_constraint(problem, &x, &u)?, u)))
        .collect::<Result<Vec<_>>>()?;
    let report = check_wellposedness(problem, &projected)?;
    Ok(IndexClass { kind: IndexKind::CompletelyHighIndex, ill_posed: report.ill_posed, witnesses: report.witnesses })
}

/// Test the span condition `sigma_l in Ker(D_x h)` and report the drift residual.
pub fn check_wellposedness(problem: &SDAEProblem, samples: &[(Vector, Vector)]) -> Result<WellposednessReport> {
    let m = problem.m();
    let witnesses = samples
        .par_iter()
        .map(|(x, u)| {
            let d1 = problem.constraint.d1(m, x, u)?;
            let diffusion_residuals = problem.sigmas(x, u).iter().map(|s| (&d1 * s).norm()).collect();
            let mut drift = problem.drift.eval(x, u);
            for s in &problem.diffusions {
                drift += generator_correction_ambient(m, &problem.generator, &s.frozen(u), x)? * 0.5;
            }
            Ok(Witness {
                x: x.iter().copied().collect(),
                u: u.iter().copied().collect(),
                d2h_norm: None,
                d2h_ratio: None,
                diffusion_residuals,
                drift_residual: Some((&d1 * drift).norm()),
            })
        })
        .collect::<Result<Vec<Witness>>>()?;
    let ill = witnesses.iter().any(|w| w.diffusion_residuals.iter().any(|&r| r > SPAN_TOL));
    Ok(WellposednessReport { ill_posed: if ill { IllPosed::Yes } else { IllPosed::NoEvidence }, witnesses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::GeneratorChoice;
    use crate::geometry::Euclidean;
    use crate::problem::{Constraint, StateField, YForm};
    use nalgebra::dvector;
    use std::sync::Arc;

    fn line_problem(h: Constraint) -> SDAEProblem {
        SDAEProblem {
            name: "line".into(),
            state_manifold: Arc::new(Euclidean::real_line()),
            algebraic_manifold: Arc::new(Euclidean::real_line()),
            target_manifold: Arc::new(Euclidean::real_line()),
            drift: StateField::new(|_, _| dvector![1.0]),
            diffusions: vec![StateField::new(|_, _| dvector![1.0])],
            generator: GeneratorChoice::Stratonovich,
            constraint: h,
            target: dvector![0.0],
            initial_state: dvector![0.0],
            initial_algebraic: None,
            y_form: YForm::SquaredDistance,
            sample_half_width: 2.0,
        }
    }

    fn plane_problem(sigma: Vector, drift: Vector) -> SDAEProblem {
        SDAEProblem {
            name: "plane".into(),
            state_manifold: Arc::new(Euclidean::new(2)),
            algebraic_manifold: Arc::new(Euclidean::real_line()),
            target_manifold: Arc::new(Euclidean::real_line()),
            drift: StateField::new(move |_, _| drift.clone()),
            diffusions: vec![StateField::new(move |_, _| sigma.clone())],
            generator: GeneratorChoice::Ito,
            constraint: Constraint::state_only(|x| Ok(dvector![x[0]])),
            target: dvector![0.0],
            initial_state: dvector![0.0, 0.0],
            initial_algebraic: None,
            y_form: YForm::Literal,
            sample_half_width: 1.0,
        }
    }

    #[test]
    fn index_one_when_d2h_invertible() {
        let p = line_problem(Constraint::coupled(|x, u| Ok(u - x)));
        assert_eq!(classify(&p, 20, 1).unwrap().kind, IndexKind::Index1);
    }

    #[test]
    fn numerically_null_d2h_is_completely_high_index() {
        let p = line_problem(Constraint::coupled(|x, _| Ok(x.clone())));
        let c = classify(&p, 10, 1).unwrap();
        assert_eq!(c.kind, IndexKind::CompletelyHighIndex);
        assert_eq!(c.ill_posed, IllPosed::Yes);
    }

    #[test]
    fn rank_deficient_d2h_is_high_index() {
        let mut p = line_problem(Constraint::coupled(|x, u| Ok(dvector![u[0] - x[0], 2.0 * u[0] + x[0]])));
        p.algebraic_manifold = Arc::new(Euclidean::new(2));
        p.target_manifold = Arc::new(Euclidean::new(2));
        p.target = dvector![0.0, 0.0];
        let c = classify(&p, 8, 2).unwrap();
        assert_eq!(c.kind, IndexKind::HighIndex);
        assert!(c.witnesses.iter().all(|w| w.d2h_ratio.unwrap() <= INVERTIBILITY_RATIO));
    }

    #[test]
    fn rectangular_d2h_is_high_index() {
        let mut p = line_problem(Constraint::coupled(|x, u| Ok(dvector![u[0] - x[0], u[0]])));
        p.target_manifold = Arc::new(Euclidean::new(2));
        p.target = dvector![0.0, 0.0];
        assert_eq!(classify(&p, 5, 1).unwrap().kind, IndexKind::HighIndex);
    }

    #[test]
    fn tangent_noise_gives_no_evidence() {
        let p = plane_problem(dvector![0.0, 1.0], dvector![0.7, -0.2]);
        let c = classify(&p, 30, 9).unwrap();
        assert_eq!(c.kind, IndexKind::CompletelyHighIndex);
        assert_eq!(c.ill_posed, IllPosed::NoEvidence);
    }

    #[test]
    fn wellposedness_residuals() {
        let p = plane_problem(dvector![0.0, 1.0], dvector![0.7, -0.2]);
        let r = check_wellposedness(&p, &[(dvector![0.0, 0.3], dvector![0.5])]).unwrap();
        assert_eq!(r.witnesses[0].diffusion_residuals, vec![0.0]);
        assert!((r.witnesses[0].drift_residual.unwrap() - 0.7).abs() < 1e-9);

        let p = plane_problem(dvector![0.0, 0.0], dvector![0.0, 0.0]);
        let r = check_wellposedness(&p, &[(dvector![0.0, 0.3], dvector![0.5])]).unwrap();
        assert_eq!(r.witnesses[0].diffusion_residuals, vec![0.0]);
        assert_eq!(r.ill_posed, IllPosed::NoEvidence);

        let p = plane_problem(dvector![1.0, 1.0], dvector![0.0, 0.0]);
        let r = check_wellposedness(&p, &[(dvector![0.0, 0.3], dvector![0.5])]).unwrap();
        assert_eq!(r.ill_posed, IllPosed::Yes);
    }

    #[test]
    fn classification_is_deterministic() {
        let p = line_problem(Constraint::coupled(|x, u| Ok(u - x)));
        assert_eq!(classify(&p, 16, 5).unwrap(), classify(&p, 16, 5).unwrap());
        assert_eq!(classify(&p, 32, 5).unwrap().kind, IndexKind::Index1);
    }

    #[test]
    fn projection_lands_on_constraint() {
        let p = plane_problem(dvector![0.0, 1.0], dvector![0.0, 0.0]);
        let x = project_to_constraint(&p, &dvector![0.4, -0.1], &dvector![0.0]).unwrap();
        assert!(x[0].abs() <= 1e-12 && (x[1] + 0.1).abs() < 1e-12);
    }
}
