//! Gauss–Hermite quadrature for Gaussian expectations.

use crate::error::{Error, Result};

/// Default node count for conditional-mean integrals. The integrands here are
/// smooth and bounded, so 64 nodes leave quadrature error far below the
/// Monte Carlo tolerances used elsewhere.
pub const DEFAULT_GH_NODES: usize = 64;

/// Nodes and weights for the weight function `exp(-t^2)` on the real line.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes an `n`-point rule by Newton iteration on the orthonormal
    /// Hermite recurrence (scaled to avoid overflow at large `n`).
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("quadrature order must be >= 1".into()));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0_f64;
        for i in 0..half {
            // Initial guesses, largest root first.
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                // Orthonormal recurrence: p1 = h~_n(z), p2 = h~_{n-1}(z).
                let mut p1 = std::f64::consts::PI.powf(-0.25);
                let mut p2 = 0.0;
                for j in 0..n {
                    let jf = j as f64;
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        nodes.reverse(); // ascending order
        weights.reverse();
        Ok(Self { nodes, weights })
    }

    /// `E[f(Z)]` for `Z ~ N(0, 1)`.
    pub fn gaussian_expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let sqrt2 = std::f64::consts::SQRT_2;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(sqrt2 * t))
            .sum::<f64>()
            * inv_sqrt_pi
    }
}
