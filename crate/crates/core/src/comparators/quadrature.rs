//! Gauss–Hermite rules and random-intercept marginal integration.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Gauss–Hermite rule for `∫ f(x) e^{-x²} dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    /// Physicists' weights; `weights / √π` integrate the standard normal.
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// `n`-point rule from the eigen-decomposition of the Jacobi matrix.
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if n == 0 || n > 100 {
            return Err(Error::Config(format!(
                "quadrature nodes must be in 1..=100, got {n}"
            )));
        }
        let mut jacobi = DMatrix::zeros(n, n);
        for k in 1..n {
            let off = (k as f64 / 2.0).sqrt();
            jacobi[(k, k - 1)] = off;
            jacobi[(k - 1, k)] = off;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], PI.sqrt() * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // symmetrize away eigen-solver noise
        for k in 0..n / 2 {
            let (a, b) = (pairs[k], pairs[n - 1 - k]);
            let x = 0.5 * (b.0 - a.0);
            let w = 0.5 * (a.1 + b.1);
            pairs[k] = (-x, w);
            pairs[n - 1 - k] = (x, w);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = 0.0;
        }
        Ok(QuadratureRule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(Z)]` for `Z ~ N(0, 1)`.
    pub fn expect_normal<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w / PI.sqrt() * f(std::f64::consts::SQRT_2 * x))
            .sum()
    }
}

/// How the random-intercept integral is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub enum QuadMode {
    /// Nodes centered at each subject's posterior mode and scaled by the
    /// curvature there.
    #[default]
    Adaptive,
    /// Nodes at `√2 σ_s x_k` for every subject.
    Plain,
}

/// `ln Σ exp(a_k)`.
pub fn log_sum_exp(a: &[f64]) -> f64 {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_point_rule() {
        let r = QuadratureRule::gauss_hermite(5).unwrap();
        // tabulated nodes / weights
        let x = [2.020_182_870_456_086, 0.958_572_464_613_818_5, 0.0];
        let w = [
            0.019_953_242_059_045_9,
            0.393_619_323_152_241_2,
            0.945_308_720_482_941_9,
        ];
        for k in 0..3 {
            assert!((r.nodes[4 - k] - x[k]).abs() < 1e-12);
            assert!((r.nodes[k] + x[k]).abs() < 1e-12);
            assert!((r.weights[4 - k] - w[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_moments() {
        for n in [1, 5, 10, 20, 30] {
            let r = QuadratureRule::gauss_hermite(n).unwrap();
            assert!((r.expect_normal(|_| 1.0) - 1.0).abs() < 1e-8, "n = {n}");
            if n >= 3 {
                assert!((r.expect_normal(|z| z * z) - 1.0).abs() < 1e-8);
                assert!((r.expect_normal(|z| z.powi(4)) - 3.0).abs() < 1e-8);
            }
        }
        let one = QuadratureRule::gauss_hermite(1).unwrap();
        assert_eq!(one.nodes, vec![0.0]);
        assert!((one.weights[0] - PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn lse() {
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
