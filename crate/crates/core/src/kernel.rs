//! Layer kernel functions: the empirical kernel of a sampled layer, the 2x2
//! input covariance, and the approximate (infinite-width) kernel computed by
//! quadrature, Monte Carlo, or closed form.

use nalgebra::{DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{Activation, Builtin};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::sampler::WeightMatrix;
use crate::stats::pairwise_sum;

/// Correlations this far past [-1, 1] are clamped; anything worse is an error.
const CORRELATION_SLACK: f64 = 1e-12;
/// Relative tolerance on the squared-norm constraint of input pairs.
const NORM_RTOL: f64 = 1e-9;

/// A pair of inputs with the norm constraint |z|^2 = |z'|^2 = alpha^2 k.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPair {
    z: DVector<f64>,
    z_prime: DVector<f64>,
    alpha: f64,
}

impl InputPair {
    pub fn new(z: DVector<f64>, z_prime: DVector<f64>) -> Result<Self> {
        Self::with_alpha(z, z_prime, 1.0)
    }

    pub fn with_alpha(z: DVector<f64>, z_prime: DVector<f64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::NonPositiveAlpha { alpha });
        }
        if z.len() != z_prime.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("two vectors of equal length, first has {}", z.len()),
                got: format!("{}", z_prime.len()),
            });
        }
        if z.is_empty() {
            return Err(Error::DegeneratePair);
        }
        let expected = alpha * alpha * z.len() as f64;
        for (which, v) in [("z", &z), ("z'", &z_prime)] {
            let got = v.norm_squared();
            if (got - expected).abs() > NORM_RTOL * expected {
                return Err(Error::NormConstraint {
                    which: if which == "z" { "z" } else { "z'" },
                    expected,
                    got,
                });
            }
        }
        let pair = InputPair { z, z_prime, alpha };
        // Validated vectors can only leave [-1, 1] by rounding.
        let c = pair.raw_correlation();
        if c.abs() > 1.0 + CORRELATION_SLACK {
            return Err(Error::InvalidCorrelation { c });
        }
        Ok(pair)
    }

    /// The canonical pair z = sqrt(k) e1, z' = sqrt(k)(c e1 + sqrt(1-c^2) e2).
    /// |c| < 1 requires k >= 2.
    pub fn canonical(k: usize, c: f64) -> Result<Self> {
        if c.abs() > 1.0 + CORRELATION_SLACK {
            return Err(Error::InvalidCorrelation { c });
        }
        let c = c.clamp(-1.0, 1.0);
        if k == 0 || (k < 2 && c.abs() < 1.0) {
            return Err(Error::ShapeMismatch {
                expected: "k >= 2 for |c| < 1 (k >= 1 for c = ±1)".into(),
                got: format!("k = {k}, c = {c}"),
            });
        }
        let root_k = (k as f64).sqrt();
        let mut z = DVector::zeros(k);
        z[0] = root_k;
        let mut z_prime = DVector::zeros(k);
        z_prime[0] = root_k * c;
        if k >= 2 {
            z_prime[1] = root_k * (1.0 - c * c).max(0.0).sqrt();
        }
        InputPair::new(z, z_prime)
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn z_prime(&self) -> &DVector<f64> {
        &self.z_prime
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn raw_correlation(&self) -> f64 {
        self.z.dot(&self.z_prime) / (self.z.norm() * self.z_prime.norm())
    }

    /// Correlation c = z.z' / (|z||z'|), clamped to [-1, 1].
    pub fn correlation(&self) -> f64 {
        self.raw_correlation().clamp(-1.0, 1.0)
    }

    pub fn swapped(&self) -> InputPair {
        InputPair {
            z: self.z_prime.clone(),
            z_prime: self.z.clone(),
            alpha: self.alpha,
        }
    }
}

/// The 2x2 covariance of the pair of layer pre-activations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPair {
    matrix: Matrix2<f64>,
}

impl SigmaPair {
    pub fn new(matrix: Matrix2<f64>) -> Result<Self> {
        let scale = matrix[(0, 0)].abs().max(matrix[(1, 1)].abs()).max(1.0);
        if (matrix[(0, 1)] - matrix[(1, 0)]).abs() > 1e-12 * scale {
            return Err(Error::Domain(format!(
                "covariance must be symmetric, got off-diagonals {} and {}",
                matrix[(0, 1)],
                matrix[(1, 0)]
            )));
        }
        // Eigenvalues of [[a, b], [b, d]].
        let (a, b, d) = (matrix[(0, 0)], matrix[(0, 1)], matrix[(1, 1)]);
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let min_eig = mid - rad;
        if min_eig < -1e-12 {
            return Err(Error::CovarianceNotPsd {
                min_eigenvalue: min_eig,
            });
        }
        Ok(SigmaPair { matrix })
    }

    /// Unit-diagonal covariance with off-diagonal c.
    pub fn from_correlation(c: f64) -> Result<Self> {
        if c.abs() > 1.0 + CORRELATION_SLACK {
            return Err(Error::InvalidCorrelation { c });
        }
        let c = c.clamp(-1.0, 1.0);
        SigmaPair::new(Matrix2::new(1.0, c, c, 1.0))
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.matrix
    }

    pub fn has_unit_diagonal(&self) -> bool {
        (self.matrix[(0, 0)] - 1.0).abs() <= NORM_RTOL && (self.matrix[(1, 1)] - 1.0).abs() <= NORM_RTOL
    }

    /// Off-diagonal correlation; meaningful for (near-)unit diagonals.
    pub fn c(&self) -> f64 {
        let denom = (self.matrix[(0, 0)] * self.matrix[(1, 1)]).sqrt();
        (self.matrix[(0, 1)] / denom).clamp(-1.0, 1.0)
    }
}

/// Sigma_{z,z'} = (1/k) [[z.z, z.z'], [z'.z, z'.z']]. The 1/k normalization is
/// kept even when alpha != 1; callers handle alpha by rescaling the activation.
pub fn sigma_of_pair(pair: &InputPair) -> SigmaPair {
    let k = pair.dim() as f64;
    let zz = pair.z().norm_squared() / k;
    let zz_prime = pair.z().dot(pair.z_prime()) / k;
    let zpzp = pair.z_prime().norm_squared() / k;
    SigmaPair {
        matrix: Matrix2::new(zz, zz_prime, zz_prime, zpzp),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateMethod {
    Empirical,
    Quadrature,
    MonteCarlo,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelEstimate {
    pub value: f64,
    pub method: EstimateMethod,
    pub stderr: Option<f64>,
}

/// kappa_f(z, z') = (1/m) sum_i phi((Wz)_i) phi((Wz')_i).
pub fn empirical_kernel(
    weights: &WeightMatrix,
    pair: &InputPair,
    activation: &Activation,
) -> Result<KernelEstimate> {
    if weights.shape().k() != pair.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("input dimension {}", weights.shape().k()),
            got: format!("{}", pair.dim()),
        });
    }
    let x = weights.data() * pair.z();
    let x_prime = weights.data() * pair.z_prime();
    Ok(KernelEstimate {
        value: empirical_kernel_on_preactivations(&x, &x_prime, activation),
        method: EstimateMethod::Empirical,
        stderr: None,
    })
}

/// The same contraction applied to already-computed pre-activations.
pub fn empirical_kernel_on_preactivations(
    x: &DVector<f64>,
    x_prime: &DVector<f64>,
    activation: &Activation,
) -> f64 {
    debug_assert_eq!(x.len(), x_prime.len());
    let products: Vec<f64> = x
        .iter()
        .zip(x_prime.iter())
        .map(|(&a, &b)| activation.eval(a) * activation.eval(b))
        .collect();
    pairwise_sum(&products) / x.len() as f64
}

fn require_unit_diagonal(sigma: &SigmaPair) -> Result<f64> {
    if !sigma.has_unit_diagonal() {
        return Err(Error::CovarianceNotUnitDiagonal {
            d0: sigma.matrix[(0, 0)],
            d1: sigma.matrix[(1, 1)],
        });
    }
    Ok(sigma.c())
}

/// Approximate kernel E_{u ~ N(0, Sigma)}[phi(u1) phi(u2)] by tensorized
/// Gauss–Hermite quadrature. Decorrelation u1 = x, u2 = c x + sqrt(1-c^2) y
/// avoids a Cholesky of the near-singular covariance; |c| = 1 collapses to a
/// one-dimensional integral.
pub fn approx_kernel_quadrature(
    sigma: &SigmaPair,
    activation: &Activation,
    order: usize,
) -> Result<KernelEstimate> {
    if order < 16 {
        return Err(Error::domain(format!(
            "quadrature order must be >= 16, got {order}"
        )));
    }
    let c = require_unit_diagonal(sigma)?;
    let rule = quadrature::rule(order);
    let value = if (c.abs() - 1.0).abs() <= CORRELATION_SLACK {
        let sign = c.signum();
        rule.expect(|x| activation.eval(x) * activation.eval(sign * x))
    } else {
        let root = (1.0 - c * c).sqrt();
        let nodes = rule.nodes();
        let weights = rule.weights();
        let mut outer = 0.0;
        for (i, &x) in nodes.iter().enumerate() {
            let phi_x = activation.eval(x);
            let mut inner = 0.0;
            for (j, &y) in nodes.iter().enumerate() {
                inner += weights[j] * activation.eval(c * x + root * y);
            }
            outer += weights[i] * phi_x * inner;
        }
        outer
    };
    Ok(KernelEstimate {
        value,
        method: EstimateMethod::Quadrature,
        stderr: None,
    })
}

/// Starts at [`quadrature::DEFAULT_ORDER`] and doubles (up to 512 nodes) until
/// consecutive orders agree to 1e-9.
pub fn approx_kernel_auto(sigma: &SigmaPair, activation: &Activation) -> Result<KernelEstimate> {
    let mut order = quadrature::DEFAULT_ORDER;
    let mut prev = approx_kernel_quadrature(sigma, activation, order)?;
    loop {
        order *= 2;
        let next = approx_kernel_quadrature(sigma, activation, order)?;
        if (next.value - prev.value).abs() <= 1e-9 || order >= 512 {
            return Ok(next);
        }
        prev = next;
    }
}

/// Monte Carlo estimate of the approximate kernel. Samples are drawn in fixed
/// 64k blocks, one ChaCha stream per block, and reduced in block order, so the
/// result does not depend on thread scheduling.
pub fn approx_kernel_mc(
    sigma: &SigmaPair,
    activation: &Activation,
    samples: u64,
    seed: u64,
) -> Result<KernelEstimate> {
    if samples == 0 {
        return Err(Error::domain("Monte Carlo needs at least one sample"));
    }
    let c = require_unit_diagonal(sigma)?;
    let root = (1.0 - c * c).max(0.0).sqrt();
    const BLOCK: u64 = 1 << 16;
    let blocks = samples.div_ceil(BLOCK);
    let partials: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let count = BLOCK.min(samples - b * BLOCK);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..count {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                let v = activation.eval(x) * activation.eval(c * x + root * y);
                sum += v;
                sumsq += v * v;
            }
            (sum, sumsq)
        })
        .collect();
    let sum: f64 = partials.iter().map(|p| p.0).sum();
    let sumsq: f64 = partials.iter().map(|p| p.1).sum();
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sumsq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
    Ok(KernelEstimate {
        value: mean,
        method: EstimateMethod::MonteCarlo,
        stderr: Some((var / n).sqrt()),
    })
}

/// Reference closed forms for unit-diagonal covariance with correlation c.
/// The Relu arc-cosine form is included for cross-reference only: Relu
/// violates the boundedness hypothesis of the orthogonal-initialization bound.
pub fn closed_form_kernel(base: Builtin, c: f64) -> Result<KernelEstimate> {
    if c.abs() > 1.0 + CORRELATION_SLACK {
        return Err(Error::InvalidCorrelation { c });
    }
    let c = c.clamp(-1.0, 1.0);
    let value = match base {
        Builtin::Identity => c,
        Builtin::Erf => std::f64::consts::FRAC_2_PI * (2.0 * c / 3.0).asin(),
        Builtin::ScaledShiftedCos => (c - 1.0).exp(),
        Builtin::Relu => {
            let theta = c.acos();
            (theta.sin() + (std::f64::consts::PI - theta) * c) / (2.0 * std::f64::consts::PI)
        }
        Builtin::Tanh => {
            return Err(Error::domain(
                "tanh has no closed-form kernel; use quadrature or Monte Carlo",
            ))
        }
    };
    Ok(KernelEstimate {
        value,
        method: EstimateMethod::ClosedForm,
        stderr: None,
    })
}
