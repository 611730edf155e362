use std::sync::Arc;

use crate::error::{Result, SdaeError};
use crate::fd;
use crate::geometry::{Chart, EmbeddedManifold, ManifoldPoint};
use crate::jet::ScalarJet;
use crate::{Matrix, Vector};

/// A diffusor in its chart-local form `a^i d_i + b^{ij} d^2_ij`.
#[derive(Debug, Clone)]
pub struct Diffusor {
    pub base: ManifoldPoint,
    pub chart: Chart,
    pub first_order: Vector,
    pub second_order: Matrix,
}

/// The image of a diffusor under the inclusion `M -> R^q`, acting on ambient
/// extensions as `f -> A . grad f + B : Hess f`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientDiffusor {
    pub first: Vector,
    pub second: Matrix,
}

impl AmbientDiffusor {
    pub fn zero(q: usize) -> Self {
        Self { first: Vector::zeros(q), second: Matrix::zeros(q, q) }
    }

    pub fn apply_jet(&self, jet: &ScalarJet) -> f64 {
        self.first.dot(&jet.grad) + self.second.component_mul(&jet.hess).sum()
    }
}

impl std::ops::Add for AmbientDiffusor {
    type Output = AmbientDiffusor;
    fn add(self, rhs: AmbientDiffusor) -> AmbientDiffusor {
        AmbientDiffusor { first: self.first + rhs.first, second: self.second + rhs.second }
    }
}

/// Symmetric contravariant 2-tensor in chart components.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTensor(pub Matrix);

impl SymmetricTensor {
    /// `T(df, dg)` for chart-coordinate covectors.
    pub fn eval(&self, df: &Vector, dg: &Vector) -> f64 {
        df.dot(&(&self.0 * dg))
    }
}

impl Diffusor {
    pub fn new(base: ManifoldPoint, chart: Chart, first_order: Vector, second_order: Matrix) -> Result<Self> {
        let n = chart.dim();
        if first_order.len() != n {
            return Err(SdaeError::Dimension { expected: n, got: first_order.len() });
        }
        if second_order.nrows() != n || second_order.ncols() != n {
            return Err(SdaeError::Dimension { expected: n, got: second_order.nrows() });
        }
        let asym = (&second_order - second_order.transpose()).amax();
        if asym > 1e-12 * second_order.amax().max(1.0) {
            return Err(SdaeError::Precondition(format!("second-order part not symmetric ({asym:e})")));
        }
        Ok(Self { base, chart, first_order, second_order })
    }

    /// Local form of an ambient diffusor: its pushforward through the chart map.
    pub fn from_ambient(base: ManifoldPoint, chart: Chart, amb: &AmbientDiffusor) -> Result<Self> {
        let x = base.coords();
        let jac = chart.forward_jacobian(x)?;
        let hess = chart.forward_hessians(x)?;
        let first = Vector::from_fn(chart.dim(), |k, _| {
            jac.row(k).transpose().dot(&amb.first) + amb.second.component_mul(&hess[k]).sum()
        });
        let second = &jac * &amb.second * jac.transpose();
        let second = (&second + second.transpose()) * 0.5;
        Ok(Self { base, chart, first_order: first, second_order: second })
    }

    fn local_coords(&self) -> Result<Vector> {
        self.chart.to_coords(self.base.coords())
    }

    /// Apply to a scalar function evaluated at ambient points of the manifold,
    /// using central differences of `f o psi` in the chart.
    pub fn apply(&self, f: &dyn Fn(&Vector) -> f64) -> Result<f64> {
        let c = self.local_coords()?;
        let local = |y: &Vector| f(&self.chart.from_coords(y));
        let grad = fd::gradient(local, &c, fd::GRAD_STEP);
        let hess = fd::hessian(local, &c, fd::HESS_STEP);
        Ok(self.first_order.dot(&grad) + self.second_order.component_mul(&hess).sum())
    }

    /// Apply to a function given by the jet of an ambient extension at the base.
    pub fn apply_jet(&self, jet: &ScalarJet) -> Result<f64> {
        let c = self.local_coords()?;
        let (grad, hess) = local_jet(&self.chart, &c, jet);
        Ok(self.first_order.dot(&grad) + self.second_order.component_mul(&hess).sum())
    }

    /// The symbol: symmetric second-order part.
    pub fn hat(&self) -> SymmetricTensor {
        SymmetricTensor(self.second_order.clone())
    }
}

/// Chart gradient and Hessian of `f o psi` from the ambient jet of `f`.
pub fn local_jet(chart: &Chart, c: &Vector, jet: &ScalarJet) -> (Vector, Matrix) {
    let ij = chart.inverse_jacobian(c);
    let ih = chart.inverse_hessians(c);
    let grad = ij.transpose() * &jet.grad;
    let mut hess = ij.transpose() * &jet.hess * &ij;
    for (k, hk) in ih.iter().enumerate() {
        hess += hk * jet.grad[k];
    }
    (grad, hess)
}

/// Apply a diffusor to `f` (the free-function form of [`Diffusor::apply`]).
pub fn apply_diffusor(l: &Diffusor, f: &dyn Fn(&Vector) -> f64) -> Result<f64> {
    l.apply(f)
}

/// The symbol `hat(L)`.
pub fn hat(l: &Diffusor) -> SymmetricTensor {
    l.hat()
}

/// `1/2 (L[fg] - f L[g] - g L[f])`, the defining identity of the symbol,
/// evaluated by direct application of `L`.
pub fn hat_by_polarization(
    l: &Diffusor,
    f: &dyn Fn(&Vector) -> f64,
    g: &dyn Fn(&Vector) -> f64,
) -> Result<f64> {
    let x = l.base.coords();
    let fg = |y: &Vector| f(y) * g(y);
    let lfg = l.apply(&fg)?;
    let lf = l.apply(f)?;
    let lg = l.apply(g)?;
    Ok(0.5 * (lfg - f(x) * lg - g(x) * lf))
}

type MapFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type MatFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
type TensorFn = Arc<dyn Fn(&Vector) -> Vec<Matrix> + Send + Sync>;

/// A smooth map between local coordinate spaces, with optional analytic derivatives.
#[derive(Clone)]
pub struct LocalMap {
    map: MapFn,
    jacobian: Option<MatFn>,
    hessians: Option<TensorFn>,
}

impl LocalMap {
    pub fn new(map: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        Self { map: Arc::new(map), jacobian: None, hessians: None }
    }

    pub fn with_jacobian(mut self, j: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn with_hessians(mut self, h: impl Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static) -> Self {
        self.hessians = Some(Arc::new(h));
        self
    }

    pub fn eval(&self, c: &Vector) -> Vector {
        (self.map)(c)
    }

    pub fn jacobian(&self, c: &Vector) -> Matrix {
        match &self.jacobian {
            Some(j) => j(c),
            None => fd::jacobian(|y| (self.map)(y), c, fd::GRAD_STEP),
        }
    }

    pub fn hessians(&self, c: &Vector) -> Vec<Matrix> {
        match &self.hessians {
            Some(h) => h(c),
            None => {
                let k = self.eval(c).len();
                (0..k).map(|i| fd::hessian(|y| (self.map)(y)[i], c, fd::HESS_STEP)).collect()
            }
        }
    }
}

/// Diffusion map: push `L` forward along `phi`, given in the local coordinates
/// of `L`'s chart (source) and `target_chart` (image).
pub fn pushforward_diffusor(
    phi: &LocalMap,
    l: &Diffusor,
    target_base: ManifoldPoint,
    target_chart: Chart,
) -> Result<Diffusor> {
    let c = l.local_coords()?;
    let image = target_chart.to_coords(target_base.coords())?;
    let mapped = phi.eval(&c);
    if (&mapped - &image).amax() > 1e-8 * image.amax().max(1.0) {
        return Err(SdaeError::Precondition("target base is not the image of the source base".into()));
    }
    let jac = phi.jacobian(&c);
    let hess = phi.hessians(&c);
    let first = Vector::from_fn(jac.nrows(), |k, _| {
        jac.row(k).transpose().dot(&l.first_order) + l.second_order.component_mul(&hess[k]).sum()
    });
    let second = &jac * &l.second_order * jac.transpose();
    let second = (&second + second.transpose()) * 0.5;
    Diffusor::new(target_base, target_chart, first, second)
}

/// Convenience: validate `x` against `m` and return the default chart there.
pub fn base_and_chart(m: &dyn EmbeddedManifold, x: &Vector) -> Result<(ManifoldPoint, Chart)> {
    let p = ManifoldPoint::new(m, x.clone())?;
    let chart = m.chart_at(x)?;
    Ok((p, chart))
}
