//! Central finite differences used as derivative fallbacks.
//!
//! Gradients use step [`GRAD_STEP`]; Hessians use the coarser [`HESS_STEP`]
//! since the roundoff term of a second difference scales as `eps / h^2`.

use crate::{Matrix, Vector};

pub const GRAD_STEP: f64 = 1e-5;
pub const HESS_STEP: f64 = 1e-4;

/// Central-difference gradient of a scalar function of a real vector.
pub fn gradient<F>(f: F, x: &Vector, h: f64) -> Vector
where
    F: Fn(&Vector) -> f64,
{
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Hessian of a scalar function of a real vector.
pub fn hessian<F>(f: F, x: &Vector, h: f64) -> Matrix
where
    F: Fn(&Vector) -> f64,
{
    let n = x.len();
    let mut hess = Matrix::zeros(n, n);
    let f0 = f(x);
    let mut xp = x.clone();
    for i in 0..n {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..n {
            let xj = x[j];
            let mut eval = |di: f64, dj: f64| {
                xp[i] = xi + di;
                xp[j] = xj + dj;
                let v = f(&xp);
                xp[i] = xi;
                xp[j] = xj;
                v
            };
            let fpp = eval(h, h);
            let fpm = eval(h, -h);
            let fmp = eval(-h, h);
            let fmm = eval(-h, -h);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Central-difference Jacobian of a vector-valued map (rows: outputs).
pub fn jacobian<F>(f: F, x: &Vector, h: f64) -> Matrix
where
    F: Fn(&Vector) -> Vector,
{
    let mut xp = x.clone();
    let mut cols: Vec<Vector> = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        cols.push((fp - fm) / (2.0 * h));
    }
    let rows = cols.first().map_or(0, |c| c.len());
    let mut jac = Matrix::zeros(rows, x.len());
    for (j, c) in cols.iter().enumerate() {
        jac.set_column(j, c);
    }
    jac
}

/// Central difference of `f(t)` at `t = 0`.
pub fn derivative<T, F>(f: F, h: f64) -> T
where
    F: Fn(f64) -> T,
    T: std::ops::Sub<Output = T> + std::ops::Div<f64, Output = T>,
{
    (f(h) - f(-h)) / (2.0 * h)
}

/// Fourth-order five-point central difference of `f(t)` at `t = 0`.
pub fn derivative5(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn quadratic_derivatives_are_recovered() {
        let f = |v: &Vector| v[0] * v[0] * 3.0 + v[0] * v[1] - 2.0 * v[1] * v[1];
        let x = dvector![0.4, -1.3];
        let g = gradient(f, &x, GRAD_STEP);
        assert!((g[0] - (6.0 * 0.4 - 1.3)).abs() < 1e-9);
        assert!((g[1] - (0.4 + 5.2)).abs() < 1e-9);
        let h = hessian(f, &x, HESS_STEP);
        assert!((h[(0, 0)] - 6.0).abs() < 1e-6);
        assert!((h[(0, 1)] - 1.0).abs() < 1e-6);
        assert!((h[(1, 1)] + 4.0).abs() < 1e-6);
    }

    #[test]
    fn jacobian_of_linear_map() {
        let a = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let jac = jacobian(|v| &a * v, &dvector![0.1, 0.2, 0.3], GRAD_STEP);
        assert!((jac - a).abs().max() < 1e-9);
    }
}
