use super::classify::INVERTIBILITY_RATIO;
use super::SDAEProblem;
use crate::error::{Result, SdaeError};
use crate::{Matrix, Vector};

/// Stratonovich drift and diffusion vectors of a coupled system on `M x N`,
/// in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledFields {
    pub x_drift: Vector,
    pub x_diffusions: Vec<Vector>,
    pub u_drift: Vector,
    pub u_diffusions: Vec<Vector>,
}

impl CoupledFields {
    pub fn zero(qm: usize, qn: usize, d: usize) -> Self {
        Self {
            x_drift: Vector::zeros(qm),
            x_diffusions: vec![Vector::zeros(qm); d],
            u_drift: Vector::zeros(qn),
            u_diffusions: vec![Vector::zeros(qn); d],
        }
    }
}

/// The index-1 reduction: `U` follows `-(D_2 h)^{-1} D_1 h` applied to the
/// Stratonovich fields of `X`.
#[derive(Debug, Clone)]
pub struct Index1Reduction<'a> {
    problem: &'a SDAEProblem,
}

pub fn index1_reduction(problem: &SDAEProblem) -> Index1Reduction<'_> {
    Index1Reduction { problem }
}

impl Index1Reduction<'_> {
    /// The linear map `w -> -(D_2 h)^{-1} D_1 h w` from `T_x M` to ambient `T_u N`.
    pub fn lift(&self, x: &Vector, u: &Vector) -> Result<Matrix> {
        let p = self.problem;
        let h = p.h(x, u)?;
        let bp = p.p().tangent_basis(&h);
        let bn = p.n().tangent_basis(u);
        let d2 = bp.transpose() * p.constraint.d2(p.n(), x, u)?;
        if d2.nrows() != d2.ncols() {
            return Err(SdaeError::SingularConstraint { condition: f64::INFINITY });
        }
        let sv = d2.singular_values();
        let (smin, smax) = (sv.min(), sv.max());
        if !(smax > 0.0 && smin / smax > INVERTIBILITY_RATIO) {
            let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
            return Err(SdaeError::SingularConstraint { condition });
        }
        let inv = d2.try_inverse().ok_or(SdaeError::SingularConstraint { condition: f64::INFINITY })?;
        let d1 = bp.transpose() * p.constraint.d1(p.m(), x, u)?;
        Ok(-(bn * inv * d1))
    }

    pub fn eval(&self, x: &Vector, u: &Vector) -> Result<CoupledFields> {
        let p = self.problem;
        let lift = self.lift(x, u)?;
        let x_drift = p.stratonovich_drift(x, u)?;
        let x_diffusions = p.sigmas(x, u);
        Ok(CoupledFields {
            u_drift: &lift * &x_drift,
            u_diffusions: x_diffusions.iter().map(|s| &lift * s).collect(),
            x_drift,
            x_diffusions,
        })
    }
}
