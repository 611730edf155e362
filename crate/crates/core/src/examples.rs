//! Registry of built-in problems.

use std::sync::Arc;

use nalgebra::dvector;

use crate::diffusion::{generator_ambient, sphere_projected_constant, GeneratorChoice, TangentField};
use crate::error::{Result, SdaeError};
use crate::geometry::{stereographic, Euclidean, Sphere};
use crate::jet::{ScalarJet, VectorJet};
use crate::problem::{Constraint, SDAEProblem, StateField, YForm};
use crate::solver::ClosedFormU;
use crate::{Matrix, Vector};

/// Smallest stereographic radius at which the sphere constraint is evaluated.
pub const CHART_ORIGIN_GUARD: f64 = 1e-12;
/// Minimum `|dh . K_1|` for the closed-form algebraic variable.
pub const CLOSED_FORM_GUARD: f64 = 1e-10;

pub const SPHERE_NOISE: f64 = 0.3;
pub const SPHERE_DRIFT: f64 = 2.0;

/// A named problem with an optional closed-form root of `Y`.
#[derive(Clone, Copy)]
pub struct ProblemEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub build: fn() -> SDAEProblem,
    pub closed_form: Option<fn() -> ClosedFormU>,
}

impl std::fmt::Debug for ProblemEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemEntry").field("name", &self.name).finish()
    }
}

pub fn registry() -> &'static [ProblemEntry] {
    &[
        ProblemEntry {
            name: "sphere_example",
            summary: "S^2 with V = 2K_2 + uK_1, sigma_j = 0.3K_j (Ito), h = 1 + sin 3theta - r in the north stereographic chart",
            build: sphere_example,
            closed_form: Some(sphere_closed_form),
        },
        ProblemEntry {
            name: "euclidean_index1",
            summary: "M = N = P = R, h = u - sin x, V = 1, sigma = 0.2",
            build: euclidean_index1,
            closed_form: None,
        },
        ProblemEntry {
            name: "tangent_noise",
            summary: "M = R^2, h = x1, V = (u - x1, 1), sigma = (0, 0.5): noise tangent to the level sets of h",
            build: tangent_noise,
            closed_form: None,
        },
        ProblemEntry {
            name: "degenerate_d2y",
            summary: "M = R^2, h = x1, V = ((u - x2)^3, 1): D_2 Y vanishes on the roots at x1 = 0",
            build: degenerate_d2y,
            closed_form: None,
        },
    ]
}

pub fn lookup(name: &str) -> Result<&'static ProblemEntry> {
    registry().iter().find(|e| e.name == name).ok_or_else(|| {
        let names: Vec<_> = registry().iter().map(|e| e.name).collect();
        SdaeError::InvalidConfig(format!("unknown problem '{name}' (known: {})", names.join(", ")))
    })
}

/// `K_1 = P_x e_3` and `K_2 = P_x e_2`, scaled.
pub fn sphere_k1(scale: f64) -> TangentField {
    sphere_projected_constant(dvector![0.0, 0.0, 1.0], scale)
}

pub fn sphere_k2(scale: f64) -> TangentField {
    sphere_projected_constant(dvector![0.0, 1.0, 0.0], scale)
}

fn projected_jacobian(k: &TangentField, x: &Vector) -> Matrix {
    k.jacobian(x).unwrap_or_else(|| Matrix::zeros(x.len(), x.len()))
}

/// `h(X, Y) = 1 + sin 3theta - r` and its chart gradient and Hessian.
pub fn sphere_h_chart_jet(c: &Vector) -> Result<ScalarJet> {
    let (x, y) = (c[0], c[1]);
    let r2 = x * x + y * y;
    let r = r2.sqrt();
    if r <= CHART_ORIGIN_GUARD {
        return Err(SdaeError::ChartDomain { chart: format!("stereographic_north origin (r = {r:e})") });
    }
    let theta = y.atan2(x);
    let (s, co) = ((3.0 * theta).sin(), (3.0 * theta).cos());
    let r4 = r2 * r2;
    let dtheta = dvector![-y / r2, x / r2];
    let htheta = Matrix::from_row_slice(2, 2, &[2.0 * x * y / r4, (y * y - x * x) / r4, (y * y - x * x) / r4, -2.0 * x * y / r4]);
    let dr = dvector![x / r, y / r];
    let hr = (Matrix::identity(2, 2) - &dr * dr.transpose()) / r;
    Ok(ScalarJet {
        value: 1.0 + s - r,
        grad: &dtheta * (3.0 * co) - &dr,
        hess: &dtheta * dtheta.transpose() * (-9.0 * s) + htheta * (3.0 * co) - hr,
    })
}

/// Ambient jet of the sphere constraint, via the north stereographic chart.
pub fn sphere_h_jet(x: &Vector) -> Result<VectorJet> {
    let chart = stereographic(1.0);
    let coords = chart.to_coords(x)?;
    let outer = sphere_h_chart_jet(&coords)?;
    let inner = VectorJet {
        value: coords,
        jacobian: chart.forward_jacobian(x)?,
        hessians: chart.forward_hessians(x)?,
    };
    let j = ScalarJet::compose(&outer, &inner);
    Ok(VectorJet { value: dvector![j.value], jacobian: Matrix::from_row_slice(1, j.grad.len(), j.grad.as_slice()), hessians: vec![j.hess] })
}

pub fn sphere_problem(noise_scale: f64, drift_scale: f64) -> SDAEProblem {
    let k1 = sphere_k1(1.0);
    let k2 = sphere_k2(drift_scale);
    let (k1j, k2j) = (k1.clone(), k2.clone());
    let k1u = k1.clone();
    let drift = StateField::new(move |x, u| k2.eval(x) + k1.eval(x) * u[0])
        .with_x_jacobian(move |x, u| projected_jacobian(&k2j, x) + projected_jacobian(&k1j, x) * u[0])
        .with_u_jacobian(move |x, _| Matrix::from_column_slice(3, 1, k1u.eval(x).as_slice()));
    let diffusions = [sphere_k1(noise_scale), sphere_k2(noise_scale)]
        .into_iter()
        .map(|k| {
            let kj = k.clone();
            StateField::new(move |x, _| k.eval(x)).with_x_jacobian(move |x, _| projected_jacobian(&kj, x)).independent_of_u()
        })
        .collect();
    let constraint = Constraint::state_only(|x| Ok(sphere_h_jet(x)?.value)).with_x_jet(|x, _| sphere_h_jet(x));
    SDAEProblem {
        name: "sphere_example".into(),
        state_manifold: Arc::new(Sphere::new(3)),
        algebraic_manifold: Arc::new(Euclidean::real_line()),
        target_manifold: Arc::new(Euclidean::real_line()),
        drift,
        diffusions,
        generator: GeneratorChoice::Ito,
        constraint,
        target: dvector![0.0],
        initial_state: dvector![1.0, 0.0, 0.0],
        initial_algebraic: Some(dvector![0.0]),
        y_form: YForm::Literal,
        sample_half_width: 1.0,
    }
}

pub fn sphere_example() -> SDAEProblem {
    sphere_problem(SPHERE_NOISE, SPHERE_DRIFT)
}

/// `u = [-b h - 2 dh.K_2 - 1/2 sum_l G_I(0.3 K_l)[h]] / (dh.K_1)`.
pub fn sphere_closed_form_u(x: &Vector, b: f64) -> Result<f64> {
    let sphere = Sphere::new(3);
    let jet = sphere_h_jet(x)?.component(0);
    let denom = jet.grad.dot(&sphere_k1(1.0).eval(x));
    if denom.abs() <= CLOSED_FORM_GUARD {
        return Err(SdaeError::DegenerateDirection { value: denom });
    }
    let mut num = -b * jet.value - jet.grad.dot(&sphere_k2(SPHERE_DRIFT).eval(x));
    for k in [sphere_k1(SPHERE_NOISE), sphere_k2(SPHERE_NOISE)] {
        num -= 0.5 * generator_ambient(&sphere, &GeneratorChoice::Ito, &k, x)?.apply_jet(&jet);
    }
    Ok(num / denom)
}

pub fn sphere_closed_form() -> ClosedFormU {
    Arc::new(|x, b| Ok(dvector![sphere_closed_form_u(x, b)?]))
}

pub fn euclidean_index1() -> SDAEProblem {
    SDAEProblem {
        name: "euclidean_index1".into(),
        state_manifold: Arc::new(Euclidean::real_line()),
        algebraic_manifold: Arc::new(Euclidean::real_line()),
        target_manifold: Arc::new(Euclidean::real_line()),
        drift: StateField::new(|_, _| dvector![1.0]).with_x_jacobian(|_, _| Matrix::zeros(1, 1)).independent_of_u(),
        diffusions: vec![StateField::new(|_, _| dvector![0.2])
            .with_x_jacobian(|_, _| Matrix::zeros(1, 1))
            .independent_of_u()],
        generator: GeneratorChoice::Stratonovich,
        constraint: Constraint::coupled(|x, u| Ok(dvector![u[0] - x[0].sin()]))
            .with_x_jet(|x, u| {
                Ok(VectorJet {
                    value: dvector![u[0] - x[0].sin()],
                    jacobian: Matrix::from_element(1, 1, -x[0].cos()),
                    hessians: vec![Matrix::from_element(1, 1, x[0].sin())],
                })
            })
            .with_u_jacobian(|_, _| Ok(Matrix::identity(1, 1))),
        target: dvector![0.0],
        initial_state: dvector![0.0],
        initial_algebraic: Some(dvector![0.0]),
        y_form: YForm::SquaredDistance,
        sample_half_width: 2.0,
    }
}

fn linear_x1(q: usize) -> Constraint {
    Constraint::state_only(|x| Ok(dvector![x[0]])).with_x_jet(move |x, _| {
        let mut jacobian = Matrix::zeros(1, q);
        jacobian[(0, 0)] = 1.0;
        Ok(VectorJet { value: dvector![x[0]], jacobian, hessians: vec![Matrix::zeros(q, q)] })
    })
}

pub fn tangent_noise() -> SDAEProblem {
    SDAEProblem {
        name: "tangent_noise".into(),
        state_manifold: Arc::new(Euclidean::new(2)),
        algebraic_manifold: Arc::new(Euclidean::real_line()),
        target_manifold: Arc::new(Euclidean::real_line()),
        drift: StateField::new(|x, u| dvector![u[0] - x[0], 1.0])
            .with_u_jacobian(|_, _| Matrix::from_column_slice(2, 1, &[1.0, 0.0])),
        diffusions: vec![StateField::new(|_, _| dvector![0.0, 0.5])
            .with_x_jacobian(|_, _| Matrix::zeros(2, 2))
            .independent_of_u()],
        generator: GeneratorChoice::Ito,
        constraint: linear_x1(2),
        target: dvector![0.0],
        initial_state: dvector![0.0, 0.0],
        initial_algebraic: Some(dvector![0.0]),
        y_form: YForm::Literal,
        sample_half_width: 2.0,
    }
}

/// `x = (x1, w)`: `Y = b x1 + (u - w)^3`, so `D_2 Y = 3 (u - w)^2` vanishes on
/// the roots at `x1 = 0`. Noise moves `w` only.
pub fn degenerate_d2y() -> SDAEProblem {
    SDAEProblem {
        name: "degenerate_d2y".into(),
        state_manifold: Arc::new(Euclidean::new(2)),
        algebraic_manifold: Arc::new(Euclidean::real_line()),
        target_manifold: Arc::new(Euclidean::real_line()),
        drift: StateField::new(|x, u| dvector![(u[0] - x[1]).powi(3), 1.0])
            .with_x_jacobian(|x, u| Matrix::from_row_slice(2, 2, &[0.0, -3.0 * (u[0] - x[1]).powi(2), 0.0, 0.0]))
            .with_u_jacobian(|x, u| Matrix::from_column_slice(2, 1, &[3.0 * (u[0] - x[1]).powi(2), 0.0])),
        diffusions: vec![StateField::new(|_, _| dvector![0.0, 0.3])
            .with_x_jacobian(|_, _| Matrix::zeros(2, 2))
            .independent_of_u()],
        generator: GeneratorChoice::Ito,
        constraint: linear_x1(2),
        target: dvector![0.0],
        initial_state: dvector![0.0, 0.0],
        initial_algebraic: Some(dvector![0.0]),
        y_form: YForm::Literal,
        sample_half_width: 1.0,
    }
}
