//! The Y-function of bounded m-solutions, its partial derivatives, the coupled
//! fields that keep it at zero, and the gradient-descent root finder.

use std::sync::Arc;

use super::config::GdScaling;
use crate::diffusion::{pushforward_diffusor, stratonovich_generator, Diffusor, LocalMap};
use crate::error::{Result, SdaeError};
use crate::fd;
use crate::geometry::{Chart, EmbeddedManifold, ManifoldPoint};
use crate::jet::ScalarJet;
use crate::problem::{ConstraintKind, CoupledFields, SDAEProblem, YForm};
use crate::{Matrix, Vector};

/// Margin kept from the injectivity radius of `p` in the target manifold.
pub const CUT_LOCUS_MARGIN: f64 = 1e-6;

/// The scalar `g(h)` that Y controls and the ambient jet in `x` of `g o h~`.
fn controlled_jet(problem: &SDAEProblem, form: YForm, x: &Vector, u: &Vector) -> Result<(f64, ScalarJet)> {
    let hj = problem.constraint.x_jet(problem.m(), x, u)?;
    let p = problem.p();
    if let Some(radius) = p.injectivity_radius(&problem.target) {
        let dist = p.distance(&problem.target, &hj.value)?;
        if radius.is_finite() && dist >= radius - CUT_LOCUS_MARGIN {
            return Err(SdaeError::CutLocusProximity { distance: dist, radius, margin: CUT_LOCUS_MARGIN });
        }
    }
    match form {
        YForm::Literal => {
            if hj.value.len() != 1 {
                return Err(SdaeError::Precondition("the literal Y form needs a scalar constraint".into()));
            }
            Ok((hj.value[0] - problem.target[0], hj.component(0)))
        }
        YForm::SquaredDistance => {
            let outer = p
                .squared_distance_jet(&problem.target, &hj.value)
                .ok_or_else(|| SdaeError::UnsupportedMetric(p.name().into()))?;
            let value = outer.value;
            Ok((value, ScalarJet::compose(&outer, &hj)))
        }
    }
}

/// `Y(x, u) = b g(h(x, u)) + [V + 1/2 sum G(sigma_l)][g o h](x, u)`.
pub fn y_value(problem: &SDAEProblem, form: YForm, b: f64, x: &Vector, u: &Vector) -> Result<f64> {
    let (g, jet) = controlled_jet(problem, form, x, u)?;
    Ok(b * g + problem.operator(x, u)?.apply_jet(&jet))
}

/// `D_2 Y` in the orthonormal tangent basis of `N` at `u`. Exact when `h`
/// ignores `u`, the diffusions are `u`-independent and `V` has a `u`-Jacobian;
/// otherwise central differences along retracted curves in `N`.
pub fn d2_y(problem: &SDAEProblem, form: YForm, b: f64, x: &Vector, u: &Vector) -> Result<Vector> {
    let n = problem.n();
    let analytic = problem.constraint.kind() == ConstraintKind::StateOnly
        && problem.drift.has_u_jacobian()
        && problem.diffusions.iter().all(|s| s.is_u_independent());
    if analytic {
        let (_, jet) = controlled_jet(problem, form, x, u)?;
        let dv = problem.drift.u_derivative(n, x, u)?;
        return Ok(dv.transpose() * jet.grad);
    }
    d2_y_numeric(problem, form, b, x, u)
}

/// Central-difference `D_2 Y` along the tangent basis of `N`.
pub fn d2_y_numeric(problem: &SDAEProblem, form: YForm, b: f64, x: &Vector, u: &Vector) -> Result<Vector> {
    let n = problem.n();
    let basis = n.tangent_basis(u);
    let h = fd::GRAD_STEP;
    let mut out = Vector::zeros(basis.ncols());
    for i in 0..basis.ncols() {
        let e = basis.column(i).into_owned();
        let up = n.retract_ambient(&(u + &e * h))?;
        let um = n.retract_ambient(&(u - &e * h))?;
        out[i] = (y_value(problem, form, b, x, &up)? - y_value(problem, form, b, x, &um)?) / (2.0 * h);
    }
    Ok(out)
}

/// `D_1 Y` as a tangent vector at `x` (its Riemannian gradient), by central
/// differences of `Y` along retracted curves `R(x + t e_i)`.
pub fn d1_y(problem: &SDAEProblem, form: YForm, b: f64, x: &Vector, u: &Vector) -> Result<Vector> {
    let m = problem.m();
    let basis = m.tangent_basis(x);
    let h = fd::GRAD_STEP;
    let mut grad = Vector::zeros(x.len());
    for i in 0..basis.ncols() {
        let e = basis.column(i).into_owned();
        let xp = m.retract_ambient(&(x + &e * h))?;
        let xm = m.retract_ambient(&(x - &e * h))?;
        let d = (y_value(problem, form, b, &xp, u)? - y_value(problem, form, b, &xm, u)?) / (2.0 * h);
        grad += e * d;
    }
    Ok(grad)
}

/// Drift and diffusion vectors on `N` keeping `Y` constant along the coupled flow.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedFields {
    /// `alpha_0 a`.
    pub drift: Vector,
    /// `alpha_l a`.
    pub diffusions: Vec<Vector>,
    /// `a = g# D_2 Y` (ambient).
    pub direction: Vector,
    /// `D_2 Y . a`.
    pub denominator: f64,
}

pub fn bounded_m_fields(
    problem: &SDAEProblem,
    form: YForm,
    b: f64,
    x: &Vector,
    u: &Vector,
    guard: f64,
) -> Result<BoundedFields> {
    let d2 = d2_y(problem, form, b, x, u)?;
    let a = problem.n().tangent_basis(u) * &d2;
    let denominator = d2.norm_squared();
    if !(denominator > guard) {
        return Err(SdaeError::DegenerateDirection { value: denominator });
    }
    let g = d1_y(problem, form, b, x, u)?;
    let alpha0 = -g.dot(&problem.stratonovich_drift(x, u)?) / denominator;
    let diffusions = problem.sigmas(x, u).iter().map(|s| &a * (-g.dot(s) / denominator)).collect();
    Ok(BoundedFields { drift: &a * alpha0, diffusions, direction: a, denominator })
}

/// Stratonovich fields of the coupled system `(X, U)` for a given `b`.
pub fn coupled_fields(
    problem: &SDAEProblem,
    form: YForm,
    b: f64,
    x: &Vector,
    u: &Vector,
    guard: f64,
) -> Result<CoupledFields> {
    let bf = bounded_m_fields(problem, form, b, x, u, guard)?;
    Ok(CoupledFields {
        x_drift: problem.stratonovich_drift(x, u)?,
        x_diffusions: problem.sigmas(x, u),
        u_drift: bf.drift,
        u_diffusions: bf.diffusions,
    })
}

/// Gradient-descent controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdControls {
    pub step: f64,
    pub scaling: GdScaling,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOutcome {
    pub u: Vector,
    pub iterations: usize,
    pub residual: f64,
}

const ARMIJO_C: f64 = 1e-4;
/// Smallest Armijo step relative to the initial trial step.
const MIN_STEP: f64 = 1e-14;
/// `|D_2 Y|` below which `Y^2` is treated as flat in `u`.
const FLAT_GRADIENT: f64 = 1e-14;

/// Riemannian gradient descent on `K(u) = Y(x, u)^2` with Armijo halving.
pub fn gradient_descent_root(
    problem: &SDAEProblem,
    form: YForm,
    b: f64,
    x: &Vector,
    u_init: &Vector,
    controls: GdControls,
) -> Result<GdOutcome> {
    let n = problem.n();
    let mut u = u_init.clone();
    let mut y = y_value(problem, form, b, x, &u)?;
    let mut iterations = 0;
    while y.abs() > controls.tol {
        if iterations >= controls.max_iter {
            return Err(SdaeError::NonConvergence { residual: y.abs(), iterations });
        }
        let d2 = d2_y(problem, form, b, x, &u)?;
        let grad = n.tangent_basis(&u) * (&d2 * (2.0 * y));
        let gnorm2 = grad.norm_squared();
        if d2.norm() <= FLAT_GRADIENT {
            return Err(SdaeError::LocalMinimum { residual: y.abs(), gradient: gnorm2.sqrt() });
        }
        let k = y * y;
        let initial = match controls.scaling {
            GdScaling::Fixed => controls.step,
            GdScaling::GaussNewton => 0.5 / d2.norm_squared(),
        };
        let mut step = initial;
        loop {
            let cand = n.retract_ambient(&(&u - &grad * step))?;
            let yc = y_value(problem, form, b, x, &cand)?;
            if yc * yc <= k - ARMIJO_C * step * gnorm2 {
                u = cand;
                y = yc;
                break;
            }
            step *= 0.5;
            if step < MIN_STEP * initial {
                return Err(SdaeError::LocalMinimum { residual: y.abs(), gradient: gnorm2.sqrt() });
            }
        }
        iterations += 1;
    }
    Ok(GdOutcome { u, iterations, residual: y.abs() })
}

type TimeMap = Arc<dyn Fn(f64, &Vector) -> Vector + Send + Sync>;
type TimeMatMap = Arc<dyn Fn(f64, &Vector) -> Matrix + Send + Sync>;

/// A map `y: R x N -> M` with optional `D_2 y` (ambient, `q_M x q_N`).
#[derive(Clone)]
pub struct YMap {
    value: TimeMap,
    d2: Option<TimeMatMap>,
}

impl YMap {
    pub fn new(value: impl Fn(f64, &Vector) -> Vector + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(value), d2: None }
    }

    pub fn with_d2(mut self, d2: impl Fn(f64, &Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.d2 = Some(Arc::new(d2));
        self
    }

    pub fn eval(&self, t: f64, u: &Vector) -> Vector {
        (self.value)(t, u)
    }

    /// `D_2 y` along the tangent basis of `n` (`q_M x n_N`).
    pub fn d2(&self, n: &dyn EmbeddedManifold, t: f64, u: &Vector) -> Result<Matrix> {
        let basis = n.tangent_basis(u);
        if let Some(d) = &self.d2 {
            return Ok(d(t, u) * basis);
        }
        let h = fd::GRAD_STEP;
        let q = self.eval(t, u).len();
        let mut out = Matrix::zeros(q, basis.ncols());
        for i in 0..basis.ncols() {
            let e = basis.column(i).into_owned();
            let up = n.retract_ambient(&(u + &e * h))?;
            let um = n.retract_ambient(&(u - &e * h))?;
            out.set_column(i, &((self.eval(t, &up) - self.eval(t, &um)) / (2.0 * h)));
        }
        Ok(out)
    }
}

/// Fields on `N` with `delta K = 0` for `K = h o y`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitProbabilityFields {
    pub a: Vector,
    pub b: Vec<Vector>,
}

/// `B_l = (Dh D_2y)^{-1} Dh sigma_l` and `a = (Dh D_2y)^{-1} Dh (V + 1/2 sum nabla^G_S sigma_l)`.
pub fn unit_probability_fields(y: &YMap, problem: &SDAEProblem, t: f64, u: &Vector) -> Result<UnitProbabilityFields> {
    let n = problem.n();
    let x = y.eval(t, u);
    let h = problem.h(&x, u)?;
    let bp = problem.p().tangent_basis(&h);
    let dh = bp.transpose() * problem.constraint.d1(problem.m(), &x, u)?;
    let a_mat = &dh * y.d2(n, t, u)?;
    if a_mat.nrows() != a_mat.ncols() {
        return Err(SdaeError::SingularConstraint { condition: f64::INFINITY });
    }
    let sv = a_mat.singular_values();
    if !(sv.max() > 0.0 && sv.min() / sv.max() > crate::problem::INVERTIBILITY_RATIO) {
        return Err(SdaeError::SingularConstraint { condition: sv.max() / sv.min() });
    }
    let solve = a_mat.lu();
    let bn = n.tangent_basis(u);
    let lift = |w: &Vector| -> Result<Vector> {
        let rhs = &dh * w;
        let c = solve.solve(&rhs).ok_or(SdaeError::SingularConstraint { condition: f64::INFINITY })?;
        Ok(&bn * c)
    };
    let a = lift(&problem.stratonovich_drift(&x, u)?)?;
    let b = problem.sigmas(&x, u).iter().map(|s| lift(s)).collect::<Result<Vec<_>>>()?;
    Ok(UnitProbabilityFields { a, b })
}

/// Value of `[D_x h . V + 1/2 sum D_x h . nabla^G_S sigma_l + 1/2 sum D h(G_S sigma_l)][f]`
/// at `(x, u)` for a function `f` on the target space: the decomposed form of
/// `[V + 1/2 sum G(sigma_l)][f o h]`. The last term pushes the Stratonovich
/// diffusor through `h` in charts with differenced derivatives.
pub fn decomposed_operator(problem: &SDAEProblem, x: &Vector, u: &Vector, f: &dyn Fn(&Vector) -> f64) -> Result<f64> {
    let m = problem.m();
    let p = problem.p();
    let h = problem.h(x, u)?;
    let p_chart = p.chart_at(&h)?;
    let fc = p_chart.to_coords(&h)?;
    let f_local = |c: &Vector| f(&p_chart.from_coords(c));
    let df = fd::gradient(f_local, &fc, fd::GRAD_STEP);
    let p_jac = p_chart.forward_jacobian(&h)?;
    let dh = problem.constraint.d1(m, x, u)?;

    let mut first = problem.drift.eval(x, u);
    for s in &problem.diffusions {
        first += crate::diffusion::generator_correction_ambient(m, &problem.generator, &s.frozen(u), x)? * 0.5;
    }
    let mut total = df.dot(&(&p_jac * (&dh * first)));

    let base = ManifoldPoint::new(m, x.clone())?;
    let target = ManifoldPoint::new(p, h.clone())?;
    let m_chart: Chart = m.chart_at(x)?;
    let local_h = chart_local_constraint(problem, &m_chart, &p_chart, u);
    for s in &problem.diffusions {
        let gs: Diffusor = stratonovich_generator(m, &s.frozen(u), &base)?;
        let pushed = pushforward_diffusor(&local_h, &gs, target.clone(), p_chart.clone())?;
        total += 0.5 * pushed.apply(&|z: &Vector| f(z))?;
    }
    Ok(total)
}

/// `h` in the charts `m_chart -> p_chart` at fixed `u`, with chain-rule
/// derivatives when the constraint carries an analytic jet.
fn chart_local_constraint(problem: &SDAEProblem, m_chart: &Chart, p_chart: &Chart, u: &Vector) -> LocalMap {
    let value = {
        let problem = problem.clone();
        let (mc, pc, u) = (m_chart.clone(), p_chart.clone(), u.clone());
        move |c: &Vector| match problem.h(&mc.from_coords(c), &u) {
            Ok(v) => pc.forward_unchecked(&v),
            Err(_) => Vector::from_element(pc.dim(), f64::NAN),
        }
    };
    if !problem.constraint.has_x_jet() {
        return LocalMap::new(value);
    }
    // (J_phi, H_phi, J_h, H_h, J_psi, H_psi) at the chart point `c`.
    let pieces = {
        let problem = problem.clone();
        let (mc, pc, u) = (m_chart.clone(), p_chart.clone(), u.clone());
        move |c: &Vector| -> Result<(Matrix, Vec<Matrix>, Matrix, Vec<Matrix>, Matrix, Vec<Matrix>)> {
            let x = mc.from_coords(c);
            let hj = problem.constraint.x_jet(problem.m(), &x, &u)?;
            let jp = pc.forward_jacobian(&hj.value)?;
            let hp = pc.forward_hessians(&hj.value)?;
            Ok((jp, hp, hj.jacobian, hj.hessians, mc.inverse_jacobian(c), mc.inverse_hessians(c)))
        }
    };
    let jacobian = {
        let pieces = pieces.clone();
        let dim = p_chart.dim();
        move |c: &Vector| match pieces(c) {
            Ok((jp, _, jh, _, jpsi, _)) => jp * jh * jpsi,
            Err(_) => Matrix::from_element(dim, c.len(), f64::NAN),
        }
    };
    let hessians = {
        let dim = p_chart.dim();
        move |c: &Vector| match pieces(c) {
            Ok((jp, hp, jh, hh, jpsi, hpsi)) => {
                let outer = &jp * &jh;
                (0..dim)
                    .map(|a| {
                        let mut inner = jh.transpose() * &hp[a] * &jh;
                        for (k, hk) in hh.iter().enumerate() {
                            inner += hk * jp[(a, k)];
                        }
                        let mut out = jpsi.transpose() * inner * &jpsi;
                        for (i, hi) in hpsi.iter().enumerate() {
                            out += hi * outer[(a, i)];
                        }
                        out
                    })
                    .collect()
            }
            Err(_) => vec![Matrix::from_element(c.len(), c.len(), f64::NAN); dim],
        }
    };
    LocalMap::new(value).with_jacobian(jacobian).with_hessians(hessians)
}

/// `[V + 1/2 sum G(sigma_l)][f o h]` from the ambient jet of `f o h~`.
pub fn composed_operator(problem: &SDAEProblem, x: &Vector, u: &Vector, f_jet: &ScalarJet) -> Result<f64> {
    let hj = problem.constraint.x_jet(problem.m(), x, u)?;
    Ok(problem.operator(x, u)?.apply_jet(&ScalarJet::compose(f_jet, &hj)))
}

/// `sum_l (sigma_l[Delta_p^2 o h])^2` at `(x, u)`, the integrand of the λ bound.
pub fn lambda_integrand(problem: &SDAEProblem, x: &Vector, u: &Vector) -> Result<f64> {
    let jet = problem.squared_distance_jet(x, u)?;
    Ok(problem.sigmas(x, u).iter().map(|s| s.dot(&jet.grad).powi(2)).sum())
}
