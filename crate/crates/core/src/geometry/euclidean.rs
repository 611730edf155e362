use rand::{Rng, RngCore};

use super::chart::Chart;
use super::EmbeddedManifold;
use crate::error::Result;
use crate::jet::ScalarJet;
use crate::{Matrix, Vector};

/// Flat `R^k` with the Euclidean metric.
#[derive(Debug, Clone)]
pub struct Euclidean {
    dim: usize,
    name: String,
}

impl Euclidean {
    pub fn new(dim: usize) -> Self {
        Self { dim, name: format!("euclidean{dim}") }
    }

    /// The real line, used as the algebraic and constraint-target manifold.
    pub fn real_line() -> Self {
        Self { dim: 1, name: "real_line".into() }
    }
}

impl EmbeddedManifold for Euclidean {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn defining_residual(&self, _y: &Vector) -> Vector {
        Vector::zeros(0)
    }

    fn project(&self, _x: &Vector, v: &Vector) -> Vector {
        v.clone()
    }

    fn retract_ambient(&self, y: &Vector) -> Result<Vector> {
        Ok(y.clone())
    }

    fn distance(&self, x: &Vector, y: &Vector) -> Result<f64> {
        Ok((x - y).norm())
    }

    fn squared_distance_jet(&self, p: &Vector, z: &Vector) -> Option<ScalarJet> {
        let d = z - p;
        Some(ScalarJet {
            value: d.norm_squared(),
            grad: &d * 2.0,
            hess: Matrix::identity(self.dim, self.dim) * 2.0,
        })
    }

    fn injectivity_radius(&self, _x: &Vector) -> Option<f64> {
        Some(f64::INFINITY)
    }

    fn charts(&self) -> Vec<Chart> {
        vec![Chart::identity(self.dim)]
    }

    fn chart_at(&self, _x: &Vector) -> Result<Chart> {
        Ok(Chart::identity(self.dim))
    }

    fn second_fundamental_form(&self, _x: &Vector, v: &Vector) -> Result<Vector> {
        Ok(Vector::zeros(v.len()))
    }

    fn tangent_basis(&self, _x: &Vector) -> Matrix {
        Matrix::identity(self.dim, self.dim)
    }

    fn sample_point(&self, rng: &mut dyn RngCore, half_width: f64) -> Result<Vector> {
        Ok(Vector::from_fn(self.dim, |_, _| rng.gen_range(-half_width..=half_width)))
    }
}
