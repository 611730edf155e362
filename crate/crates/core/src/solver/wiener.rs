use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Matrix;

/// Stream offset separating retry draws from the main increments of a path.
const RETRY_STREAM: u64 = 1 << 63;
/// Stream offset for Brownian-bridge refinements of a grid step.
const BRIDGE_STREAM: u64 = 1 << 62;

/// Increments of a `d`-dimensional Wiener process on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    pub d: usize,
    pub dt: f64,
    /// `n_steps x d`, each entry `N(0, dt)`.
    pub increments: Matrix,
}

/// Generator for path `path_index` of the ensemble seeded by `seed`.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Generator for fresh retry increments of path `path_index`.
pub fn retry_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    path_rng(seed, path_index | RETRY_STREAM)
}

/// Draw an `n_steps x d` block of `N(0, dt)` increments, row by row.
pub fn draw_increments(rng: &mut ChaCha8Rng, d: usize, n_steps: usize, dt: f64) -> Matrix {
    let scale = dt.sqrt();
    let mut m = Matrix::zeros(n_steps, d);
    for i in 0..n_steps {
        for l in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            m[(i, l)] = z * scale;
        }
    }
    m
}

/// Split the grid increment `dw` over `[step*dt, (step+1)*dt]` into `k`
/// sub-increments drawn from the Brownian bridge. The split depends only on
/// `(seed, path_index, step)` and the increments sum to `dw`.
pub fn bridge_increments(seed: u64, path_index: u64, step: usize, dw: &[f64], k: usize, dt: f64) -> Matrix {
    let mut rng = path_rng(seed, path_index | BRIDGE_STREAM);
    rng.set_word_pos((step as u128) << 32);
    let mut m = draw_increments(&mut rng, dw.len(), k, dt / k as f64);
    for (l, &w) in dw.iter().enumerate() {
        let shift = (w - m.column(l).sum()) / k as f64;
        m.column_mut(l).add_scalar_mut(shift);
    }
    m
}

pub fn wiener_path(seed: u64, path_index: u64, d: usize, n_steps: usize, dt: f64) -> WienerPath {
    let mut rng = path_rng(seed, path_index);
    WienerPath { d, dt, increments: draw_increments(&mut rng, d, n_steps, dt) }
}

impl WienerPath {
    pub fn n_steps(&self) -> usize {
        self.increments.nrows()
    }

    pub fn increment(&self, step: usize) -> Vec<f64> {
        self.increments.row(step).iter().copied().collect()
    }

    /// The same Brownian path sampled on a grid `k` times coarser.
    pub fn coarsen(&self, k: usize) -> WienerPath {
        let n = self.n_steps() / k;
        let mut m = Matrix::zeros(n, self.d);
        for i in 0..n {
            for j in 0..k {
                for l in 0..self.d {
                    m[(i, l)] += self.increments[(i * k + j, l)];
                }
            }
        }
        WienerPath { d: self.d, dt: self.dt * k as f64, increments: m }
    }

    /// Values `W_t` at the grid times, starting from 0.
    pub fn cumulative(&self) -> Matrix {
        let mut w = Matrix::zeros(self.n_steps() + 1, self.d);
        for i in 0..self.n_steps() {
            for l in 0..self.d {
                w[(i + 1, l)] = w[(i, l)] + self.increments[(i, l)];
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridge_sums_to_increment() {
        let dw = [0.03, -0.01];
        let m = bridge_increments(5, 2, 17, &dw, 8, 1e-3);
        assert_eq!(m.shape(), (8, 2));
        for l in 0..2 {
            assert!((m.column(l).sum() - dw[l]).abs() < 1e-15);
        }
        assert_eq!(m, bridge_increments(5, 2, 17, &dw, 8, 1e-3));
        assert_ne!(m, bridge_increments(5, 2, 18, &dw, 8, 1e-3));
    }

    #[test]
    fn bridge_variance() {
        // Var of one piece of a k-split bridge of length dt is dt/k * (1 - 1/k).
        let (k, dt, n) = (4, 1.0, 20000);
        let mut acc = 0.0;
        for step in 0..n {
            let m = bridge_increments(1, 0, step, &[0.0], k, dt);
            acc += m[(0, 0)] * m[(0, 0)];
        }
        let var = acc / n as f64;
        let expect = dt / k as f64 * (1.0 - 1.0 / k as f64);
        assert!((var - expect).abs() < 0.05 * expect, "{var} vs {expect}");
    }

    #[test]
    fn deterministic_per_seed_and_index() {
        assert_eq!(wiener_path(7, 3, 2, 100, 1e-3), wiener_path(7, 3, 2, 100, 1e-3));
        assert_ne!(wiener_path(7, 3, 2, 100, 1e-3), wiener_path(7, 4, 2, 100, 1e-3));
    }

    #[test]
    fn moments_of_increments() {
        let dt = 1e-3;
        let w = wiener_path(11, 0, 1, 1_000_000, dt);
        let n = w.increments.len() as f64;
        let mean = w.increments.sum() / n;
        let var = w.increments.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (n - 1.0);
        let stderr = (dt / n).sqrt();
        assert!(mean.abs() <= 3.0 * stderr, "{mean}");
        assert!((var / dt - 1.0).abs() < 0.05);
        let short = wiener_path(11, 1, 1, 10_000, dt);
        let v: f64 = short.increments.iter().map(|z| z * z).sum::<f64>() / 10_000.0;
        assert!((v / dt - 1.0).abs() < 0.05);
    }

    #[test]
    fn distinct_streams_uncorrelated() {
        let a = wiener_path(5, 0, 1, 100_000, 1.0);
        let b = wiener_path(5, 1, 1, 100_000, 1.0);
        let n = 100_000.0;
        let (ma, mb) = (a.increments.sum() / n, b.increments.sum() / n);
        let cov = a.increments.iter().zip(b.increments.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
        let va = a.increments.iter().map(|x| (x - ma).powi(2)).sum::<f64>();
        let vb = b.increments.iter().map(|y| (y - mb).powi(2)).sum::<f64>();
        assert!((cov / (va * vb).sqrt()).abs() < 0.01);
    }

    #[test]
    fn coarsening_preserves_endpoints() {
        let w = wiener_path(1, 0, 2, 1000, 1e-4);
        let c = w.coarsen(4);
        assert_eq!(c.n_steps(), 250);
        assert!((c.dt - 4e-4).abs() < 1e-18);
        let (fw, fc) = (w.cumulative(), c.cumulative());
        for l in 0..2 {
            assert!((fw[(1000, l)] - fc[(250, l)]).abs() < 1e-12);
        }
    }

    #[test]
    fn retry_stream_differs_from_main() {
        let mut a = path_rng(3, 2);
        let mut b = retry_rng(3, 2);
        assert_ne!(draw_increments(&mut a, 1, 4, 1.0), draw_increments(&mut b, 1, 4, 1.0));
    }
}
