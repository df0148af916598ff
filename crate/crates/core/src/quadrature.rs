//! Gauss-Hermite rules for expectations under a normal law.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

pub const DEFAULT_NODES: usize = 32;

/// Nodes and weights for `E g(Z)`, `Z ~ N(0, 1)`: `sum_k w_k g(x_k)`.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HermiteRule {
    /// Golub-Welsch: eigenvalues of the Jacobi matrix of the probabilists'
    /// Hermite recurrence are the nodes, squared first eigenvector entries
    /// the weights.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // symmetrise to kill round-off asymmetry
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for k in 0..n {
            let (x, w) = pairs[k];
            let (xm, wm) = pairs[n - 1 - k];
            nodes[k] = 0.5 * (x - xm);
            weights[k] = 0.5 * (w + wm);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { nodes, weights }
    }

    /// Shared default 32-node rule.
    pub fn standard() -> &'static HermiteRule {
        static RULE: OnceLock<HermiteRule> = OnceLock::new();
        RULE.get_or_init(|| HermiteRule::new(DEFAULT_NODES))
    }

    /// `E g(mean + sd Z)`.
    pub fn expect(&self, mean: f64, sd: f64, g: impl Fn(f64) -> f64) -> f64 {
        if sd == 0.0 {
            return g(mean);
        }
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * g(mean + sd * x))
            .sum()
    }
}
