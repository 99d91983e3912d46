//! Gauss–Hermite quadrature rules for Gaussian expectations.
//!
//! Nodes and weights come from the Golub–Welsch algorithm: the Jacobi
//! matrix of the (physicists') Hermite polynomials is symmetric
//! tridiagonal with zero diagonal and off-diagonal sqrt(i/2), so its
//! eigenvalues are the nodes and the squared first eigenvector
//! components (times sqrt(pi)) are the weights.

use nalgebra::DMatrix;

/// A one-dimensional Gauss–Hermite rule with probabilists' normalization:
/// the stored weights sum to one, so `sum_i w_i f(sqrt(2) x_i)` estimates
/// `E[f(Z)]` for standard normal `Z`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds a rule with `n` nodes (exact for polynomials of degree 2n-1).
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be at least 1");
        if n == 1 {
            return Self {
                nodes: vec![0.0],
                weights: vec![1.0],
            };
        }
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for i in 0..n - 1 {
            let off = ((i + 1) as f64 / 2.0).sqrt();
            jacobi[(i, i + 1)] = off;
            jacobi[(i + 1, i)] = off;
        }
        let eigen = jacobi.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = eigen
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &node)| {
                let first = eigen.eigenvectors[(0, k)];
                (node, first * first)
            })
            .collect();
        // eigen order is unspecified; sort for a deterministic rule
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // the rule is mathematically symmetric; enforce it bitwise so
        // reflected integrands integrate to exactly reflected values
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let node = 0.5 * (pairs[j].0 - pairs[i].0);
            let weight = 0.5 * (pairs[i].1 + pairs[j].1);
            pairs[i] = (-node, weight);
            pairs[j] = (node, weight);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = 0.0;
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Raw Hermite nodes; remember the sqrt(2) map when targeting a
    /// standard normal.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Normalized weights (sum to one).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}
