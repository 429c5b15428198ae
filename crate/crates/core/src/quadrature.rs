//! Gauss–Hermite quadrature for expectations under the standard normal law.
//!
//! Rules are generated by the Golub–Welsch algorithm (eigendecomposition of
//! the Jacobi matrix of the Hermite recurrence) and stored pre-transformed so
//! that `expect(f)` approximates `E_{x ~ N(0,1)}[f(x)]` directly.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use once_cell::sync::Lazy;

/// Default order for kernel integrals; doubled on demand by callers.
pub const DEFAULT_ORDER: usize = 64;
/// Default order for activation moment integrals.
pub const MOMENT_ORDER: usize = 128;

#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `order`-point rule normalized for the standard normal weight.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be >= 1");
        // Jacobi matrix for physicists' Hermite polynomials (weight e^{-x^2}):
        // zero diagonal, off-diagonal sqrt(j/2).
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for j in 1..order {
            let b = (j as f64 / 2.0).sqrt();
            jacobi[(j - 1, j)] = b;
            jacobi[(j, j - 1)] = b;
        }
        let eig = jacobi.symmetric_eigen();
        let mu0 = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| {
                let t = eig.eigenvalues[i];
                let v0 = eig.eigenvectors[(0, i)];
                (t, mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Change of variables x = sqrt(2) t turns the e^{-x^2} rule into an
        // expectation against the N(0,1) density.
        let nodes = pairs.iter().map(|&(t, _)| std::f64::consts::SQRT_2 * t).collect();
        let weights = pairs.iter().map(|&(_, w)| w / mu0).collect();
        GaussHermite { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E_{x ~ N(0,1)}[f(x)]`, summed in fixed (ascending-node) order.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

static RULES: Lazy<Mutex<HashMap<usize, Arc<GaussHermite>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Shared, cached rule for the given order.
pub fn rule(order: usize) -> Arc<GaussHermite> {
    let mut cache = RULES.lock().unwrap();
    cache
        .entry(order)
        .or_insert_with(|| Arc::new(GaussHermite::new(order)))
        .clone()
}
