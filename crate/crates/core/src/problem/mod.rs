//! Explicit SDAEs on manifolds: definition, index classification and the
//! index-1 reduction to a coupled Stratonovich system.

mod classify;
mod index1;

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use crate::diffusion::{generator_ambient, generator_correction_ambient, AmbientDiffusor, GeneratorChoice, TangentField};
use crate::error::{Result, SdaeError};
use crate::fd;
use crate::geometry::{residual_norm, ManifoldRef, MEMBERSHIP_TOL};
use crate::jet::{ScalarJet, VectorJet};
use crate::{Matrix, Vector};

pub use classify::{
    check_wellposedness, classify, project_to_constraint, IllPosed, IndexClass, IndexKind, WellposednessReport,
    Witness, INVERTIBILITY_RATIO, NULL_DERIVATIVE, SPAN_TOL,
};
pub use index1::{index1_reduction, CoupledFields, Index1Reduction};

type PairFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
type PairMatFn = Arc<dyn Fn(&Vector, &Vector) -> Matrix + Send + Sync>;

/// A vector field on `M` parametrised by the algebraic variable, `(x, u) -> T_x M`,
/// given through an ambient extension in `x`.
#[derive(Clone)]
pub struct StateField {
    value: PairFn,
    x_jacobian: Option<PairMatFn>,
    u_jacobian: Option<PairMatFn>,
    u_independent: bool,
}

impl fmt::Debug for StateField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateField")
            .field("x_jacobian", &self.x_jacobian.is_some())
            .field("u_jacobian", &self.u_jacobian.is_some())
            .field("u_independent", &self.u_independent)
            .finish()
    }
}

impl StateField {
    pub fn new(value: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(value), x_jacobian: None, u_jacobian: None, u_independent: false }
    }

    /// Ambient Jacobian in `x` (`q_M x q_M`).
    pub fn with_x_jacobian(mut self, j: impl Fn(&Vector, &Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.x_jacobian = Some(Arc::new(j));
        self
    }

    /// Ambient Jacobian in `u` (`q_M x q_N`).
    pub fn with_u_jacobian(mut self, j: impl Fn(&Vector, &Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.u_jacobian = Some(Arc::new(j));
        self
    }

    /// Declare that the field does not depend on `u`.
    pub fn independent_of_u(mut self) -> Self {
        self.u_independent = true;
        self
    }

    pub fn zero(q: usize) -> Self {
        Self::new(move |_, _| Vector::zeros(q)).with_x_jacobian(move |_, _| Matrix::zeros(q, q)).independent_of_u()
    }

    pub fn is_u_independent(&self) -> bool {
        self.u_independent
    }

    pub fn has_u_jacobian(&self) -> bool {
        self.u_jacobian.is_some() || self.u_independent
    }

    pub fn eval(&self, x: &Vector, u: &Vector) -> Vector {
        (self.value)(x, u)
    }

    /// The field on `M` with `u` held fixed.
    pub fn frozen(&self, u: &Vector) -> TangentField {
        let v = self.value.clone();
        let u1 = u.clone();
        let field = TangentField::new(move |x| v(x, &u1));
        match &self.x_jacobian {
            Some(j) => {
                let j = j.clone();
                let u2 = u.clone();
                field.with_jacobian(move |x| j(x, &u2))
            }
            None => field,
        }
    }

    /// Derivative in `u` along the tangent basis of `N` (`q_M x n_N`).
    pub fn u_derivative(&self, n: &dyn crate::geometry::EmbeddedManifold, x: &Vector, u: &Vector) -> Result<Matrix> {
        let basis = n.tangent_basis(u);
        if self.u_independent {
            return Ok(Matrix::zeros(x.len(), basis.ncols()));
        }
        if let Some(j) = &self.u_jacobian {
            return Ok(j(x, u) * basis);
        }
        let h = fd::GRAD_STEP;
        let mut out = Matrix::zeros(x.len(), basis.ncols());
        for i in 0..basis.ncols() {
            let e = basis.column(i).into_owned();
            let up = n.retract_ambient(&(u + &e * h))?;
            let um = n.retract_ambient(&(u - &e * h))?;
            out.set_column(i, &((self.eval(x, &up) - self.eval(x, &um)) / (2.0 * h)));
        }
        Ok(out)
    }
}

type ConstraintFn = Arc<dyn Fn(&Vector, &Vector) -> Result<Vector> + Send + Sync>;
type ConstraintJetFn = Arc<dyn Fn(&Vector, &Vector) -> Result<VectorJet> + Send + Sync>;
type ConstraintMatFn = Arc<dyn Fn(&Vector, &Vector) -> Result<Matrix> + Send + Sync>;

/// Whether the constraint involves the algebraic variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Coupled,
    /// `h(x)` only, declared by the problem author.
    StateOnly,
}

/// The constraint map `h: M x N -> P` with optional analytic derivatives.
#[derive(Clone)]
pub struct Constraint {
    kind: ConstraintKind,
    value: ConstraintFn,
    x_jet: Option<ConstraintJetFn>,
    u_jacobian: Option<ConstraintMatFn>,
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constraint")
            .field("kind", &self.kind)
            .field("x_jet", &self.x_jet.is_some())
            .field("u_jacobian", &self.u_jacobian.is_some())
            .finish()
    }
}

impl Constraint {
    pub fn coupled(h: impl Fn(&Vector, &Vector) -> Result<Vector> + Send + Sync + 'static) -> Self {
        Self { kind: ConstraintKind::Coupled, value: Arc::new(h), x_jet: None, u_jacobian: None }
    }

    pub fn state_only(h: impl Fn(&Vector) -> Result<Vector> + Send + Sync + 'static) -> Self {
        Self { kind: ConstraintKind::StateOnly, value: Arc::new(move |x, _| h(x)), x_jet: None, u_jacobian: None }
    }

    /// Analytic ambient jet in `x` of an extension of `h(., u)`.
    pub fn with_x_jet(mut self, j: impl Fn(&Vector, &Vector) -> Result<VectorJet> + Send + Sync + 'static) -> Self {
        self.x_jet = Some(Arc::new(j));
        self
    }

    /// Analytic ambient Jacobian in `u` (`q_P x q_N`).
    pub fn with_u_jacobian(mut self, j: impl Fn(&Vector, &Vector) -> Result<Matrix> + Send + Sync + 'static) -> Self {
        self.u_jacobian = Some(Arc::new(j));
        self
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn has_x_jet(&self) -> bool {
        self.x_jet.is_some()
    }

    pub fn eval(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        (self.value)(x, u)
    }

    /// Ambient jet in `x`. Without an analytic jet, differentiates the
    /// extension `y -> h(R_M(y), u)` by central differences.
    pub fn x_jet(&self, m: &dyn crate::geometry::EmbeddedManifold, x: &Vector, u: &Vector) -> Result<VectorJet> {
        if let Some(j) = &self.x_jet {
            return j(x, u);
        }
        let value = self.eval(x, u)?;
        let ext = |y: &Vector| -> Result<Vector> { self.eval(&m.retract_ambient(y)?, u) };
        let failure = RefCell::new(None);
        let guarded = |y: &Vector| match ext(y) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Vector::from_element(value.len(), f64::NAN)
            }
        };
        let jacobian = fd::jacobian(&guarded, x, fd::GRAD_STEP);
        let mut hessians = Vec::with_capacity(value.len());
        for k in 0..value.len() {
            hessians.push(fd::hessian(|y| guarded(y)[k], x, fd::HESS_STEP));
        }
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(VectorJet { value, jacobian, hessians })
    }

    /// Ambient Jacobian in `x` (`q_P x q_M`); only its action on `T_x M` is meaningful.
    pub fn d1(&self, m: &dyn crate::geometry::EmbeddedManifold, x: &Vector, u: &Vector) -> Result<Matrix> {
        if let Some(j) = &self.x_jet {
            return Ok(j(x, u)?.jacobian);
        }
        let p = self.eval(x, u)?.len();
        let failure = RefCell::new(None);
        let jac = fd::jacobian(
            |y: &Vector| match m.retract_ambient(y).and_then(|z| self.eval(&z, u)) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    Vector::from_element(p, f64::NAN)
                }
            },
            x,
            fd::GRAD_STEP,
        );
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(jac),
        }
    }

    /// Derivative in `u` along the tangent basis of `N` (`q_P x n_N`).
    pub fn d2(&self, n: &dyn crate::geometry::EmbeddedManifold, x: &Vector, u: &Vector) -> Result<Matrix> {
        let basis = n.tangent_basis(u);
        let p = self.eval(x, u)?.len();
        if self.kind == ConstraintKind::StateOnly {
            return Ok(Matrix::zeros(p, basis.ncols()));
        }
        if let Some(j) = &self.u_jacobian {
            return Ok(j(x, u)? * basis);
        }
        let h = fd::GRAD_STEP;
        let mut out = Matrix::zeros(p, basis.ncols());
        for i in 0..basis.ncols() {
            let e = basis.column(i).into_owned();
            let up = n.retract_ambient(&(u + &e * h))?;
            let um = n.retract_ambient(&(u - &e * h))?;
            out.set_column(i, &((self.eval(x, &up)? - self.eval(x, &um)?) / (2.0 * h)));
        }
        Ok(out)
    }
}

/// Which function of the constraint value the Y-function differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YForm {
    /// `Y = b D^2 + [V + 1/2 sum G(sigma_l)][D^2 o h]` with `D = Delta_p`.
    SquaredDistance,
    /// `Y = b (h - p) + [V + 1/2 sum G(sigma_l)][h]`, for scalar `P = R`.
    Literal,
}

/// An explicit SDAE `dX = V(X,U) dt + sigma_l(X,U) dW^l`, `h(X,U) = p`.
#[derive(Debug, Clone)]
pub struct SDAEProblem {
    pub name: String,
    pub state_manifold: ManifoldRef,
    pub algebraic_manifold: ManifoldRef,
    pub target_manifold: ManifoldRef,
    pub drift: StateField,
    pub diffusions: Vec<StateField>,
    pub generator: GeneratorChoice,
    pub constraint: Constraint,
    pub target: Vector,
    pub initial_state: Vector,
    pub initial_algebraic: Option<Vector>,
    pub y_form: YForm,
    /// Half width of the sampling box for flat manifolds.
    pub sample_half_width: f64,
}

/// Tolerance on the normal component of drift and diffusion fields.
pub const TANGENCY_TOL: f64 = 1e-10;

impl SDAEProblem {
    pub fn d(&self) -> usize {
        self.diffusions.len()
    }

    pub fn m(&self) -> &dyn crate::geometry::EmbeddedManifold {
        self.state_manifold.as_ref()
    }

    pub fn n(&self) -> &dyn crate::geometry::EmbeddedManifold {
        self.algebraic_manifold.as_ref()
    }

    pub fn p(&self) -> &dyn crate::geometry::EmbeddedManifold {
        self.target_manifold.as_ref()
    }

    /// Algebraic starting guess: the declared `U_0` or the origin of `N`'s ambient space.
    pub fn initial_guess(&self) -> Vector {
        self.initial_algebraic.clone().unwrap_or_else(|| Vector::zeros(self.n().ambient_dim()))
    }

    /// Check dimensions, membership and tangency at `(x, u)`.
    pub fn check_point(&self, x: &Vector, u: &Vector) -> Result<()> {
        let m = self.m();
        if x.len() != m.ambient_dim() {
            return Err(SdaeError::Dimension { expected: m.ambient_dim(), got: x.len() });
        }
        if u.len() != self.n().ambient_dim() {
            return Err(SdaeError::Dimension { expected: self.n().ambient_dim(), got: u.len() });
        }
        let res = residual_norm(m, x);
        if res > MEMBERSHIP_TOL {
            return Err(SdaeError::InvalidPoint { manifold: m.name().into(), residual: res });
        }
        let mut fields = vec![("drift".to_string(), self.drift.eval(x, u))];
        for (l, s) in self.diffusions.iter().enumerate() {
            fields.push((format!("sigma_{}", l + 1), s.eval(x, u)));
        }
        for (name, v) in fields {
            let normal = (&v - m.project(x, &v)).norm();
            if normal > TANGENCY_TOL * v.norm().max(1.0) {
                return Err(SdaeError::Precondition(format!("{name} is not tangent at x (normal part {normal:e})")));
            }
        }
        Ok(())
    }

    /// Validate the problem invariants at the initial state.
    pub fn validate(&self) -> Result<()> {
        if self.diffusions.is_empty() {
            return Err(SdaeError::Precondition("at least one diffusion field is required".into()));
        }
        let u = self.initial_guess();
        self.check_point(&self.initial_state, &u)?;
        let h = self.constraint.eval(&self.initial_state, &u)?;
        if h.len() != self.p().ambient_dim() || self.target.len() != h.len() {
            return Err(SdaeError::Dimension { expected: self.p().ambient_dim(), got: h.len() });
        }
        Ok(())
    }

    pub fn sigmas(&self, x: &Vector, u: &Vector) -> Vec<Vector> {
        self.diffusions.iter().map(|s| s.eval(x, u)).collect()
    }

    /// Ambient form of `G(sigma_l(., u))` at `x`.
    pub fn generator_terms(&self, x: &Vector, u: &Vector) -> Result<Vec<AmbientDiffusor>> {
        self.diffusions.iter().map(|s| generator_ambient(self.m(), &self.generator, &s.frozen(u), x)).collect()
    }

    /// Ambient form of the second-order operator `V + 1/2 sum G(sigma_l)`.
    pub fn operator(&self, x: &Vector, u: &Vector) -> Result<AmbientDiffusor> {
        let mut op = AmbientDiffusor { first: self.drift.eval(x, u), second: Matrix::zeros(x.len(), x.len()) };
        for g in self.generator_terms(x, u)? {
            op.first += g.first * 0.5;
            op.second += g.second * 0.5;
        }
        Ok(op)
    }

    /// Stratonovich drift `V + 1/2 sum (G - G_S)(sigma_l)`.
    pub fn stratonovich_drift(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        let mut v = self.drift.eval(x, u);
        for s in &self.diffusions {
            v += generator_correction_ambient(self.m(), &self.generator, &s.frozen(u), x)? * 0.5;
        }
        Ok(v)
    }

    /// Ito drift `V + 1/2 sum (G - G_I)(sigma_l)`; requires the Levi-Civita connection.
    pub fn ito_drift(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        let m = self.m();
        if !m.has_connection() {
            return Err(SdaeError::SchemeMismatch(format!("Ito scheme needs a connection on {}", m.name())));
        }
        let mut v = self.drift.eval(x, u);
        if matches!(self.generator, GeneratorChoice::Ito) {
            return Ok(v);
        }
        for (s, g) in self.sigmas(x, u).iter().zip(self.generator_terms(x, u)?) {
            let ii = m.second_fundamental_form(x, s)?;
            v += m.project(x, &(g.first - ii)) * 0.5;
        }
        Ok(v)
    }

    pub fn h(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        self.constraint.eval(x, u)
    }

    /// `Delta_p(h(x, u))`.
    pub fn h_dist(&self, x: &Vector, u: &Vector) -> Result<f64> {
        let h = self.h(x, u)?;
        self.p().distance(&self.target, &h)
    }

    /// Jet of `Delta_p^2 o h~` in `x`.
    pub fn squared_distance_jet(&self, x: &Vector, u: &Vector) -> Result<ScalarJet> {
        let hj = self.constraint.x_jet(self.m(), x, u)?;
        let outer = self
            .p()
            .squared_distance_jet(&self.target, &hj.value)
            .ok_or_else(|| SdaeError::UnsupportedMetric(self.p().name().into()))?;
        Ok(ScalarJet::compose(&outer, &hj))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Euclidean, Sphere};
    use nalgebra::dvector;

    fn flat_problem() -> SDAEProblem {
        SDAEProblem {
            name: "flat".into(),
            state_manifold: Arc::new(Euclidean::new(2)),
            algebraic_manifold: Arc::new(Euclidean::real_line()),
            target_manifold: Arc::new(Euclidean::real_line()),
            drift: StateField::new(|x, u| dvector![u[0] * x[1], 1.0]),
            diffusions: vec![StateField::new(|x, _| dvector![0.0, x[0]])],
            generator: GeneratorChoice::Ito,
            constraint: Constraint::coupled(|x, u| Ok(dvector![x[0] * u[0] + x[1]])),
            target: dvector![0.0],
            initial_state: dvector![1.0, 0.5],
            initial_algebraic: Some(dvector![0.2]),
            y_form: YForm::SquaredDistance,
            sample_half_width: 1.0,
        }
    }

    #[test]
    fn validation_accepts_well_formed_problem() {
        flat_problem().validate().unwrap();
    }

    #[test]
    fn validation_rejects_normal_fields() {
        let mut p = flat_problem();
        p.state_manifold = Arc::new(Sphere::new(2));
        p.initial_state = dvector![1.0, 0.0];
        p.drift = StateField::new(|x, _| x.clone());
        assert!(matches!(p.validate(), Err(SdaeError::Precondition(_))));
    }

    #[test]
    fn constraint_derivatives_fall_back_to_differences() {
        let p = flat_problem();
        let (x, u) = (dvector![0.3, -0.7], dvector![1.5]);
        let d1 = p.constraint.d1(p.m(), &x, &u).unwrap();
        assert!((d1 - Matrix::from_row_slice(1, 2, &[1.5, 1.0])).amax() < 1e-9);
        let d2 = p.constraint.d2(p.n(), &x, &u).unwrap();
        assert!((d2[(0, 0)] - 0.3).abs() < 1e-9);
        let jet = p.constraint.x_jet(p.m(), &x, &u).unwrap();
        assert!(jet.hessians[0].amax() < 1e-6);
    }

    #[test]
    fn field_u_derivative_by_differences() {
        let p = flat_problem();
        let d = p.drift.u_derivative(p.n(), &dvector![0.0, 2.0], &dvector![1.0]).unwrap();
        assert!((d[(0, 0)] - 2.0).abs() < 1e-9 && d[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn flat_drifts_coincide() {
        let p = flat_problem();
        let (x, u) = (dvector![0.3, -0.7], dvector![1.5]);
        let s = p.stratonovich_drift(&x, &u).unwrap();
        let i = p.ito_drift(&x, &u).unwrap();
        // sigma = (0, x1) has D sigma . sigma = 0, so all three forms agree with V.
        assert!((&s - p.drift.eval(&x, &u)).norm() < 1e-9);
        assert!((&i - p.drift.eval(&x, &u)).norm() < 1e-12);
    }
}
