//! Extrinsically represented manifolds: points and tangent vectors in ambient
//! coordinates, orthogonal tangent projectors, metric-projection retractions,
//! charts, geodesic distance and Riemannian gradients for the induced metric.

mod chart;
mod euclidean;
mod sphere;

pub use chart::{chart_roundtrip, stereographic, Chart, ChartRoundtrip, STEREO_POLE_MARGIN};
pub use euclidean::Euclidean;
pub use sphere::Sphere;

use std::fmt;
use std::sync::Arc;

use rand::RngCore;

use crate::error::{Result, SdaeError};
use crate::jet::ScalarJet;
use crate::{Matrix, Vector};

/// Max-norm of the defining residual accepted for manifold membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// An `n`-manifold realised in ambient `R^q`.
///
/// Implementors supply the defining equations, the orthogonal projector onto
/// `T_x M` and a retraction; everything else has a generic default. User
/// manifolds are registered by implementing this trait.
pub trait EmbeddedManifold: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Intrinsic dimension `n`.
    fn dim(&self) -> usize;

    /// Ambient dimension `q`.
    fn ambient_dim(&self) -> usize;

    /// Map vanishing exactly on the manifold.
    fn defining_residual(&self, y: &Vector) -> Vector;

    /// `P_x v`: orthogonal projection of an ambient vector onto `T_x M`.
    fn project(&self, x: &Vector, v: &Vector) -> Vector;

    /// Nearest-point retraction of an ambient point.
    fn retract_ambient(&self, y: &Vector) -> Result<Vector>;

    /// Geodesic distance, when the manifold provides one.
    fn distance(&self, x: &Vector, _y: &Vector) -> Result<f64> {
        let _ = x;
        Err(SdaeError::UnsupportedMetric(self.name().to_string()))
    }

    /// Jet of an ambient extension of `z -> dist(p, z)^2`, when known in closed form.
    fn squared_distance_jet(&self, _p: &Vector, _z: &Vector) -> Option<ScalarJet> {
        None
    }

    /// Injectivity radius at `x`; `None` when unknown.
    fn injectivity_radius(&self, _x: &Vector) -> Option<f64> {
        None
    }

    fn charts(&self) -> Vec<Chart>;

    /// A chart whose domain contains `x`.
    fn chart_at(&self, x: &Vector) -> Result<Chart> {
        self.charts()
            .into_iter()
            .find(|c| c.contains(x))
            .ok_or_else(|| SdaeError::ChartDomain { chart: format!("{}:*", self.name()) })
    }

    /// Whether the Levi-Civita connection of the induced metric is available.
    fn has_connection(&self) -> bool {
        true
    }

    /// Second fundamental form `II_x(v, v)`, the normal part of the ambient
    /// acceleration of curves with velocity `v`. Defaults to `(D P)[v] v`.
    fn second_fundamental_form(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        let nv = v.norm();
        if nv == 0.0 {
            return Ok(Vector::zeros(v.len()));
        }
        let eps = 1e-5 / nv;
        let xp = self.retract_ambient(&(x + v * eps))?;
        let xm = self.retract_ambient(&(x - v * eps))?;
        Ok((self.project(&xp, v) - self.project(&xm, v)) / (2.0 * eps))
    }

    /// Orthonormal basis of `T_x M` as ambient columns (`q x n`).
    fn tangent_basis(&self, x: &Vector) -> Matrix {
        let q = self.ambient_dim();
        let n = self.dim();
        let mut cols: Vec<Vector> = Vec::with_capacity(n);
        for i in 0..q {
            if cols.len() == n {
                break;
            }
            let mut e = Vector::zeros(q);
            e[i] = 1.0;
            let mut v = self.project(x, &e);
            for c in &cols {
                let d = c.dot(&v);
                v -= c * d;
            }
            let nv = v.norm();
            if nv > 1e-6 {
                cols.push(v / nv);
            }
        }
        let mut b = Matrix::zeros(q, cols.len());
        for (j, c) in cols.iter().enumerate() {
            b.set_column(j, c);
        }
        b
    }

    /// Draw a point from the manifold's sampling measure; Euclidean factors use
    /// the box `[-half_width, half_width]^q`.
    fn sample_point(&self, rng: &mut dyn RngCore, half_width: f64) -> Result<Vector>;
}

pub type ManifoldRef = Arc<dyn EmbeddedManifold>;

/// Max-norm of the defining residual.
pub fn residual_norm(m: &dyn EmbeddedManifold, y: &Vector) -> f64 {
    m.defining_residual(y).amax()
}

/// A point validated against the membership tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    coords: Vector,
}

impl ManifoldPoint {
    pub fn new(m: &dyn EmbeddedManifold, coords: Vector) -> Result<Self> {
        if coords.len() != m.ambient_dim() {
            return Err(SdaeError::Dimension { expected: m.ambient_dim(), got: coords.len() });
        }
        let residual = residual_norm(m, &coords);
        if !(residual <= MEMBERSHIP_TOL) {
            return Err(SdaeError::InvalidPoint { manifold: m.name().to_string(), residual });
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &Vector {
        &self.coords
    }

    pub fn into_coords(self) -> Vector {
        self.coords
    }
}

/// An ambient vector tangent at its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: ManifoldPoint,
    pub vec: Vector,
}

/// `P_x v` as a tangent vector at `x`.
pub fn project_tangent(m: &dyn EmbeddedManifold, x: &ManifoldPoint, v: &Vector) -> Result<TangentVector> {
    if v.len() != m.ambient_dim() {
        return Err(SdaeError::Dimension { expected: m.ambient_dim(), got: v.len() });
    }
    Ok(TangentVector { base: x.clone(), vec: m.project(x.coords(), v) })
}

/// Retract an ambient point onto the manifold.
pub fn retract(m: &dyn EmbeddedManifold, y: &Vector) -> Result<ManifoldPoint> {
    let coords = m.retract_ambient(y)?;
    ManifoldPoint::new(m, coords)
}

pub fn geodesic_distance(m: &dyn EmbeddedManifold, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
    m.distance(x.coords(), y.coords())
}

/// Riemannian gradient for the induced metric of an ambient covector `df`.
pub fn riemannian_gradient(m: &dyn EmbeddedManifold, x: &ManifoldPoint, df: &Vector) -> Result<TangentVector> {
    project_tangent(m, x, df)
}
