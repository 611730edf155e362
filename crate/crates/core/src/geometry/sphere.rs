use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::chart::{stereographic, Chart};
use super::EmbeddedManifold;
use crate::error::{Result, SdaeError};
use crate::Vector;

/// Unit sphere `S^{q-1}` in `R^q`.
#[derive(Debug, Clone, Copy)]
pub struct Sphere {
    ambient: usize,
}

impl Sphere {
    pub fn new(ambient: usize) -> Self {
        assert!(ambient >= 2, "sphere needs ambient dimension >= 2");
        Self { ambient }
    }
}

impl EmbeddedManifold for Sphere {
    fn name(&self) -> &str {
        "sphere"
    }

    fn dim(&self) -> usize {
        self.ambient - 1
    }

    fn ambient_dim(&self) -> usize {
        self.ambient
    }

    fn defining_residual(&self, y: &Vector) -> Vector {
        Vector::from_element(1, y.norm() - 1.0)
    }

    fn project(&self, x: &Vector, v: &Vector) -> Vector {
        let n2 = x.norm_squared();
        v - x * (x.dot(v) / n2)
    }

    fn retract_ambient(&self, y: &Vector) -> Result<Vector> {
        let n = y.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(SdaeError::DegenerateRetraction { manifold: self.name().to_string() });
        }
        Ok(y / n)
    }

    fn distance(&self, x: &Vector, y: &Vector) -> Result<f64> {
        // Chord-based formula stays accurate for nearby and antipodal points.
        let chord = (x - y).norm();
        Ok(2.0 * (0.5 * chord).min(1.0).asin())
    }

    fn injectivity_radius(&self, _x: &Vector) -> Option<f64> {
        Some(std::f64::consts::PI)
    }

    fn charts(&self) -> Vec<Chart> {
        if self.ambient == 3 {
            vec![stereographic(1.0), stereographic(-1.0)]
        } else {
            Vec::new()
        }
    }

    fn chart_at(&self, x: &Vector) -> Result<Chart> {
        if self.ambient != 3 {
            return Err(SdaeError::ChartDomain { chart: "sphere:*".into() });
        }
        Ok(if x[2] <= 0.0 { stereographic(1.0) } else { stereographic(-1.0) })
    }

    fn second_fundamental_form(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        Ok(x * (-v.norm_squared() / x.norm_squared()))
    }

    fn sample_point(&self, rng: &mut dyn RngCore, _half_width: f64) -> Result<Vector> {
        loop {
            let g = Vector::from_fn(self.ambient, |_, _| StandardNormal.sample(rng));
            if g.norm() > 1e-6 {
                return self.retract_ambient(&g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MEMBERSHIP_TOL;
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tangent_cases(seed: u64, points: usize, vectors: usize) -> Vec<(Vector, Vec<Vector>)> {
        let s = Sphere::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..points)
            .map(|_| {
                let x = s.sample_point(&mut rng, 1.0).unwrap();
                let vs = (0..vectors)
                    .map(|_| Vector::from_fn(3, |_, _| StandardNormal.sample(&mut rng)))
                    .collect();
                (x, vs)
            })
            .collect()
    }

    #[test]
    fn projector_is_idempotent_and_tangent() {
        let s = Sphere::new(3);
        for (x, vs) in random_tangent_cases(7, 100, 10) {
            assert!(s.defining_residual(&x)[0].abs() <= MEMBERSHIP_TOL);
            for v in vs {
                let pv = s.project(&x, &v);
                assert!((s.project(&x, &pv) - &pv).norm() <= 1e-12);
                assert!(pv.dot(&x).abs() <= 1e-12);
                // The differential of the defining map annihilates P_x v.
                let dres = (x.transpose() * &pv)[0] / x.norm();
                assert!(dres.abs() <= 1e-12 * pv.norm().max(1.0));
            }
        }
    }

    #[test]
    fn retraction_is_projective() {
        let s = Sphere::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = s.sample_point(&mut rng, 1.0).unwrap();
            let offset = Vector::from_fn(3, |_, _| { let z: f64 = StandardNormal.sample(&mut rng); z }) * 0.05;
            let y = &x + offset;
            let r1 = s.retract_ambient(&y).unwrap();
            assert!(s.defining_residual(&r1)[0].abs() <= 1e-12);
            let r2 = s.retract_ambient(&r1).unwrap();
            assert!((&r2 - &r1).amax() <= 1e-14);
        }
    }

    #[test]
    fn distance_triangle_inequality() {
        let s = Sphere::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = s.sample_point(&mut rng, 1.0).unwrap();
            let b = s.sample_point(&mut rng, 1.0).unwrap();
            let c = s.sample_point(&mut rng, 1.0).unwrap();
            let ab = s.distance(&a, &b).unwrap();
            let bc = s.distance(&b, &c).unwrap();
            let ac = s.distance(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-10);
            assert!((ab - s.distance(&b, &a).unwrap()).abs() < 1e-15);
            assert!(ab <= std::f64::consts::PI + 1e-15);
        }
    }

    #[test]
    fn second_fundamental_form_matches_generic_default() {
        #[derive(Debug)]
        struct Plain(Sphere);
        impl EmbeddedManifold for Plain {
            fn name(&self) -> &str {
                "plain"
            }
            fn dim(&self) -> usize {
                2
            }
            fn ambient_dim(&self) -> usize {
                3
            }
            fn defining_residual(&self, y: &Vector) -> Vector {
                self.0.defining_residual(y)
            }
            fn project(&self, x: &Vector, v: &Vector) -> Vector {
                self.0.project(x, v)
            }
            fn retract_ambient(&self, y: &Vector) -> Result<Vector> {
                self.0.retract_ambient(y)
            }
            fn charts(&self) -> Vec<Chart> {
                self.0.charts()
            }
            fn sample_point(&self, rng: &mut dyn RngCore, w: f64) -> Result<Vector> {
                self.0.sample_point(rng, w)
            }
        }
        let s = Sphere::new(3);
        let plain = Plain(s);
        let x = dvector![0.48, 0.6, 0.64];
        let v = s.project(&x, &dvector![0.3, -1.0, 0.2]);
        let exact = s.second_fundamental_form(&x, &v).unwrap();
        let generic = plain.second_fundamental_form(&x, &v).unwrap();
        assert!((exact - generic).norm() < 1e-8);
    }

    #[test]
    fn chart_jacobians_are_mutually_inverse_on_tangent_space() {
        let s = Sphere::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = s.sample_point(&mut rng, 1.0).unwrap();
            let chart = s.chart_at(&x).unwrap();
            let c = chart.to_coords(&x).unwrap();
            let fwd = chart.forward_jacobian(&x).unwrap();
            let inv = chart.inverse_jacobian(&c);
            let id = &fwd * &inv;
            assert!((id - crate::Matrix::identity(2, 2)).amax() < 1e-8);
            let back = chart.from_coords(&c);
            assert!((back - &x).norm() < 1e-10);
        }
    }
}
