//! Local charts of embedded manifolds.
//!
//! The forward map is given on ambient points and must be defined in a
//! neighbourhood of the manifold; derivatives not supplied analytically are
//! taken by central differences of that ambient extension.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, SdaeError};
use crate::fd;
use crate::{Matrix, Vector};

type MapFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type MatFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
type TensorFn = Arc<dyn Fn(&Vector) -> Vec<Matrix> + Send + Sync>;
type PredFn = Arc<dyn Fn(&Vector) -> bool + Send + Sync>;

/// A chart `phi: U subset M -> R^n` with inverse `psi: R^n -> M`.
#[derive(Clone)]
pub struct Chart {
    name: String,
    dim: usize,
    ambient_dim: usize,
    domain: PredFn,
    forward: MapFn,
    inverse: MapFn,
    forward_jacobian: Option<MatFn>,
    forward_hessians: Option<TensorFn>,
    inverse_jacobian: Option<MatFn>,
    inverse_hessians: Option<TensorFn>,
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("ambient_dim", &self.ambient_dim)
            .finish_non_exhaustive()
    }
}

impl Chart {
    /// Chart from forward and inverse maps; derivatives default to finite differences.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        ambient_dim: usize,
        domain: impl Fn(&Vector) -> bool + Send + Sync + 'static,
        forward: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        inverse: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            ambient_dim,
            domain: Arc::new(domain),
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
            forward_jacobian: None,
            forward_hessians: None,
            inverse_jacobian: None,
            inverse_hessians: None,
        }
    }

    pub fn with_forward_jacobian(mut self, f: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.forward_jacobian = Some(Arc::new(f));
        self
    }

    pub fn with_forward_hessians(
        mut self,
        f: impl Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static,
    ) -> Self {
        self.forward_hessians = Some(Arc::new(f));
        self
    }

    pub fn with_inverse_jacobian(mut self, f: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.inverse_jacobian = Some(Arc::new(f));
        self
    }

    pub fn with_inverse_hessians(
        mut self,
        f: impl Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static,
    ) -> Self {
        self.inverse_hessians = Some(Arc::new(f));
        self
    }

    /// Identity chart of `R^k`.
    pub fn identity(k: usize) -> Self {
        Chart::new("identity", k, k, |_| true, |x| x.clone(), |c| c.clone())
            .with_forward_jacobian(move |_| Matrix::identity(k, k))
            .with_forward_hessians(move |_| vec![Matrix::zeros(k, k); k])
            .with_inverse_jacobian(move |_| Matrix::identity(k, k))
            .with_inverse_hessians(move |_| vec![Matrix::zeros(k, k); k])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn contains(&self, x: &Vector) -> bool {
        (self.domain)(x)
    }

    fn check(&self, x: &Vector) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(SdaeError::ChartDomain { chart: self.name.clone() })
        }
    }

    /// Local coordinates of an ambient point in the chart domain.
    pub fn to_coords(&self, x: &Vector) -> Result<Vector> {
        self.check(x)?;
        Ok((self.forward)(x))
    }

    /// Forward map without the domain check (for ambient extensions).
    pub fn forward_unchecked(&self, x: &Vector) -> Vector {
        (self.forward)(x)
    }

    pub fn from_coords(&self, c: &Vector) -> Vector {
        (self.inverse)(c)
    }

    /// Differential of the forward map at ambient `x` (`n x q`).
    pub fn forward_jacobian(&self, x: &Vector) -> Result<Matrix> {
        self.check(x)?;
        Ok(match &self.forward_jacobian {
            Some(j) => j(x),
            None => fd::jacobian(|y| (self.forward)(y), x, fd::GRAD_STEP),
        })
    }

    /// Ambient Hessians of each forward coordinate function (`n` matrices `q x q`).
    pub fn forward_hessians(&self, x: &Vector) -> Result<Vec<Matrix>> {
        self.check(x)?;
        Ok(match &self.forward_hessians {
            Some(h) => h(x),
            None => (0..self.dim)
                .map(|k| fd::hessian(|y| (self.forward)(y)[k], x, fd::HESS_STEP))
                .collect(),
        })
    }

    /// Differential of the inverse map at local coordinates `c` (`q x n`).
    pub fn inverse_jacobian(&self, c: &Vector) -> Matrix {
        match &self.inverse_jacobian {
            Some(j) => j(c),
            None => fd::jacobian(|y| (self.inverse)(y), c, fd::GRAD_STEP),
        }
    }

    /// Second derivatives of each ambient component of the inverse map (`q` matrices `n x n`).
    pub fn inverse_hessians(&self, c: &Vector) -> Vec<Matrix> {
        match &self.inverse_hessians {
            Some(h) => h(c),
            None => {
                let n = self.dim;
                let step = 1e-6;
                let mut out = vec![Matrix::zeros(n, n); self.ambient_dim];
                let mut cp = c.clone();
                for j in 0..n {
                    let cj = c[j];
                    cp[j] = cj + step;
                    let jp = self.inverse_jacobian(&cp);
                    cp[j] = cj - step;
                    let jm = self.inverse_jacobian(&cp);
                    cp[j] = cj;
                    let d = (jp - jm) / (2.0 * step);
                    for (k, hk) in out.iter_mut().enumerate() {
                        for i in 0..n {
                            hk[(i, j)] = d[(k, i)];
                        }
                    }
                }
                for hk in out.iter_mut() {
                    let sym = (&*hk + hk.transpose()) * 0.5;
                    *hk = sym;
                }
                out
            }
        }
    }
}

/// Result of a chart round trip: local coordinates and the recovered point.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartRoundtrip {
    pub coords: Vector,
    pub recovered: Vector,
}

/// Map a point into the chart and back.
pub fn chart_roundtrip(chart: &Chart, x: &Vector) -> Result<ChartRoundtrip> {
    let coords = chart.to_coords(x)?;
    let recovered = chart.from_coords(&coords);
    Ok(ChartRoundtrip { coords, recovered })
}

/// Minimum distance `1 - |x3|` kept from the projection pole.
pub const STEREO_POLE_MARGIN: f64 = 1e-6;

/// Stereographic projection of the unit 2-sphere from `(0, 0, pole)`, `pole = +-1`.
pub fn stereographic(pole: f64) -> Chart {
    let s = pole.signum();
    let name = if s > 0.0 { "stereographic_north" } else { "stereographic_south" };
    Chart::new(
        name,
        2,
        3,
        move |x| 1.0 - s * x[2] > STEREO_POLE_MARGIN,
        move |x| {
            let d = 1.0 - s * x[2];
            Vector::from_vec(vec![x[0] / d, x[1] / d])
        },
        move |c| {
            let r2 = c[0] * c[0] + c[1] * c[1];
            let den = 1.0 + r2;
            Vector::from_vec(vec![2.0 * c[0] / den, 2.0 * c[1] / den, s * (r2 - 1.0) / den])
        },
    )
    .with_forward_jacobian(move |x| {
        let d = 1.0 - s * x[2];
        let d2 = d * d;
        Matrix::from_row_slice(2, 3, &[1.0 / d, 0.0, s * x[0] / d2, 0.0, 1.0 / d, s * x[1] / d2])
    })
    .with_forward_hessians(move |x| {
        let d = 1.0 - s * x[2];
        let d2 = d * d;
        let d3 = d2 * d;
        (0..2)
            .map(|k| {
                let mut h = Matrix::zeros(3, 3);
                h[(k, 2)] = s / d2;
                h[(2, k)] = s / d2;
                h[(2, 2)] = 2.0 * x[k] / d3;
                h
            })
            .collect()
    })
    .with_inverse_jacobian(move |c| {
        let (x, y) = (c[0], c[1]);
        let den = 1.0 + x * x + y * y;
        let den2 = den * den;
        Matrix::from_row_slice(
            3,
            2,
            &[
                2.0 / den - 4.0 * x * x / den2,
                -4.0 * x * y / den2,
                -4.0 * x * y / den2,
                2.0 / den - 4.0 * y * y / den2,
                s * 4.0 * x / den2,
                s * 4.0 * y / den2,
            ],
        )
    })
}
