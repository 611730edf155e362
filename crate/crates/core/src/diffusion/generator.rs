use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::diffusor::{AmbientDiffusor, Diffusor};
use crate::error::{Result, SdaeError};
use crate::geometry::{EmbeddedManifold, ManifoldPoint, TangentVector};
use crate::{Matrix, Vector};

type FieldFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type FieldJacFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// A vector field on `M` given through an ambient extension, optionally with
/// the ambient Jacobian of that extension.
#[derive(Clone)]
pub struct TangentField {
    value: FieldFn,
    jacobian: Option<FieldJacFn>,
}

impl fmt::Debug for TangentField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TangentField").field("analytic_jacobian", &self.jacobian.is_some()).finish()
    }
}

impl TangentField {
    pub fn new(value: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(value), jacobian: None }
    }

    pub fn with_jacobian(mut self, j: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    /// Constant ambient vector (tangent everywhere only on flat manifolds).
    pub fn constant(v: Vector) -> Self {
        let q = v.len();
        Self::new(move |_| v.clone()).with_jacobian(move |_| Matrix::zeros(q, q))
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        (self.value)(x)
    }

    /// The analytic ambient Jacobian at `x`, when one was supplied.
    pub fn jacobian(&self, x: &Vector) -> Option<Matrix> {
        self.jacobian.as_ref().map(|j| j(x))
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// `D sigma~ . v` at `x`. Without an analytic Jacobian this is a central
    /// difference along the retracted curve `R(x + t v)`, which only sees
    /// values on `M` and is therefore extension independent.
    pub fn derivative_along(&self, m: &dyn EmbeddedManifold, x: &Vector, v: &Vector) -> Result<Vector> {
        if let Some(j) = &self.jacobian {
            return Ok(j(x) * v);
        }
        let nv = v.norm();
        if nv == 0.0 {
            return Ok(Vector::zeros(x.len()));
        }
        let eps = 1e-5 / nv;
        let xp = m.retract_ambient(&(x + v * eps))?;
        let xm = m.retract_ambient(&(x - v * eps))?;
        Ok((self.eval(&xp) - self.eval(&xm)) / (2.0 * eps))
    }
}

/// `nabla_sigma sigma = P_x (D sigma~ . sigma)` for the induced Levi-Civita connection.
pub fn covariant_derivative(m: &dyn EmbeddedManifold, sigma: &TangentField, x: &ManifoldPoint) -> Result<TangentVector> {
    let s = sigma.eval(x.coords());
    let d = sigma.derivative_along(m, x.coords(), &s)?;
    Ok(TangentVector { base: x.clone(), vec: m.project(x.coords(), &d) })
}

type CustomMap = Arc<dyn Fn(&Vector, &Vector) -> AmbientDiffusor + Send + Sync>;

/// A user diffusion generator `Y_x -> G(Y_x)` given by its ambient form.
#[derive(Clone)]
pub struct CustomGenerator {
    name: String,
    map: CustomMap,
}

impl fmt::Debug for CustomGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomGenerator").field("name", &self.name).finish()
    }
}

/// Number of random `(x, Y)` pairs checked when registering a custom generator.
pub const SYMBOL_SELF_TEST_SAMPLES: usize = 500;

impl CustomGenerator {
    /// Register a custom generator; rejected unless `hat(G(Y)) = Y (x) Y`
    /// holds within 1e-8 on random tangent vectors of `m`.
    pub fn register(
        name: impl Into<String>,
        m: &dyn EmbeddedManifold,
        map: impl Fn(&Vector, &Vector) -> AmbientDiffusor + Send + Sync + 'static,
    ) -> Result<Self> {
        let gen = Self { name: name.into(), map: Arc::new(map) };
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_9e4e);
        let mut worst = 0.0f64;
        for _ in 0..SYMBOL_SELF_TEST_SAMPLES {
            let x = m.sample_point(&mut rng, 1.0)?;
            let raw = Vector::from_fn(m.ambient_dim(), |_, _| StandardNormal.sample(&mut rng));
            let y = m.project(&x, &raw);
            let d = gen.eval(&x, &y);
            let err = (&d.second - &y * y.transpose()).amax() / y.norm_squared().max(1.0);
            worst = worst.max(err);
        }
        if !(worst <= 1e-8) {
            return Err(SdaeError::SymbolCondition { name: gen.name, error: worst });
        }
        Ok(gen)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &Vector, y: &Vector) -> AmbientDiffusor {
        (self.map)(x, y)
    }
}

/// Which diffusion generator turns vector fields into diffusors.
#[derive(Debug, Clone)]
pub enum GeneratorChoice {
    /// Hessian of the induced Levi-Civita connection.
    Ito,
    /// `sigma -> sigma[sigma[.]]`.
    Stratonovich,
    Custom(CustomGenerator),
}

impl GeneratorChoice {
    pub fn label(&self) -> &str {
        match self {
            GeneratorChoice::Ito => "ito",
            GeneratorChoice::Stratonovich => "stratonovich",
            GeneratorChoice::Custom(c) => c.name(),
        }
    }
}

/// Ambient form of `G_S(sigma)`: `(D sigma~ . sigma, sigma sigma^T)`.
pub fn stratonovich_ambient(m: &dyn EmbeddedManifold, sigma: &TangentField, x: &Vector) -> Result<AmbientDiffusor> {
    let s = sigma.eval(x);
    let first = sigma.derivative_along(m, x, &s)?;
    Ok(AmbientDiffusor { second: &s * s.transpose(), first })
}

/// Ambient form of `G_I(Y)`: `(II(Y, Y), Y Y^T)`.
pub fn ito_ambient(m: &dyn EmbeddedManifold, y: &Vector, x: &Vector) -> Result<AmbientDiffusor> {
    if !m.has_connection() {
        return Err(SdaeError::MissingConnection(m.name().to_string()));
    }
    Ok(AmbientDiffusor { first: m.second_fundamental_form(x, y)?, second: y * y.transpose() })
}

/// Ambient form of `G(sigma)` at `x`.
pub fn generator_ambient(
    m: &dyn EmbeddedManifold,
    gen: &GeneratorChoice,
    sigma: &TangentField,
    x: &Vector,
) -> Result<AmbientDiffusor> {
    match gen {
        GeneratorChoice::Stratonovich => stratonovich_ambient(m, sigma, x),
        GeneratorChoice::Ito => ito_ambient(m, &sigma.eval(x), x),
        GeneratorChoice::Custom(c) => Ok(c.eval(x, &sigma.eval(x))),
    }
}

/// `G(sigma)` at `x` as a chart-local diffusor.
pub fn generator_diffusor(
    m: &dyn EmbeddedManifold,
    gen: &GeneratorChoice,
    sigma: &TangentField,
    x: &ManifoldPoint,
) -> Result<Diffusor> {
    let amb = generator_ambient(m, gen, sigma, x.coords())?;
    let chart = m.chart_at(x.coords())?;
    Diffusor::from_ambient(x.clone(), chart, &amb)
}

pub fn stratonovich_generator(m: &dyn EmbeddedManifold, sigma: &TangentField, x: &ManifoldPoint) -> Result<Diffusor> {
    generator_diffusor(m, &GeneratorChoice::Stratonovich, sigma, x)
}

pub fn ito_generator(m: &dyn EmbeddedManifold, sigma: &TangentField, x: &ManifoldPoint) -> Result<Diffusor> {
    generator_diffusor(m, &GeneratorChoice::Ito, sigma, x)
}

/// `(G - G_S)(sigma)` at `x` in ambient coordinates (tangent up to rounding).
pub fn generator_correction_ambient(
    m: &dyn EmbeddedManifold,
    gen: &GeneratorChoice,
    sigma: &TangentField,
    x: &Vector,
) -> Result<Vector> {
    match gen {
        GeneratorChoice::Stratonovich => Ok(Vector::zeros(x.len())),
        GeneratorChoice::Ito => {
            let s = sigma.eval(x);
            let acc = sigma.derivative_along(m, x, &s)?;
            Ok(-m.project(x, &acc))
        }
        GeneratorChoice::Custom(c) => {
            let s = sigma.eval(x);
            let acc = sigma.derivative_along(m, x, &s)?;
            Ok(m.project(x, &(c.eval(x, &s).first - acc)))
        }
    }
}

/// `nabla^G_S(sigma) = (G - G_S)(sigma)` as a tangent vector; equals
/// `-nabla_sigma sigma` for the Ito generator.
pub fn generator_correction(
    m: &dyn EmbeddedManifold,
    gen: &GeneratorChoice,
    sigma: &TangentField,
    x: &ManifoldPoint,
) -> Result<TangentVector> {
    Ok(TangentVector { base: x.clone(), vec: generator_correction_ambient(m, gen, sigma, x.coords())? })
}

/// Sphere field `K_c(x) = P_x c` with its analytic ambient Jacobian
/// `D K . v = -(c.v) x - (c.x) v` (extension `c - (c.x) x`).
pub fn sphere_projected_constant(c: Vector, scale: f64) -> TangentField {
    let c2 = c.clone();
    TangentField::new(move |x| (&c - x * c.dot(x)) * scale).with_jacobian(move |x| {
        let q = x.len();
        (x * c2.transpose() + Matrix::identity(q, q) * c2.dot(x)) * (-scale)
    })
}
