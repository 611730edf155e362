//! Second-order jets of ambient extensions of functions.

use crate::{Matrix, Vector};

/// Value, gradient and Hessian of a scalar function on ambient space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarJet {
    pub value: f64,
    pub grad: Vector,
    pub hess: Matrix,
}

/// Value, Jacobian and per-component Hessians of a vector-valued ambient map.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorJet {
    pub value: Vector,
    pub jacobian: Matrix,
    pub hessians: Vec<Matrix>,
}

impl ScalarJet {
    /// Jet of `f o h` from the jets of `f` (at `h(x)`) and `h` (at `x`).
    pub fn compose(outer: &ScalarJet, inner: &VectorJet) -> ScalarJet {
        let grad = inner.jacobian.transpose() * &outer.grad;
        let mut hess = inner.jacobian.transpose() * &outer.hess * &inner.jacobian;
        for (k, hk) in inner.hessians.iter().enumerate() {
            hess += hk * outer.grad[k];
        }
        ScalarJet { value: outer.value, grad, hess }
    }
}

impl VectorJet {
    /// The jet of a single component.
    pub fn component(&self, k: usize) -> ScalarJet {
        ScalarJet {
            value: self.value[k],
            grad: self.jacobian.row(k).transpose(),
            hess: self.hessians[k].clone(),
        }
    }
}
