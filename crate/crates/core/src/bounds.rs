//! Every explicit bound and hypothesis check used by the convergence and
//! concentration analysis: the Gaussian fan-in width bound, both sufficient
//! conditions of the orthogonal-initialization theorem, the Wasserstein and
//! mean-bias bounds, the Lipschitz constants, the concentration tail, and the
//! gradient whose Hilbert–Schmidt norm certifies the Lipschitz constant.
//!
//! Tail probabilities are evaluated in log space (exponents reach thousands in
//! sweeps) and capped at 1.  Boundary inequalities are inclusive.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::kernel::InputPair;
use crate::sampler::MatrixShape;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_2: f64 = std::f64::consts::LN_2;

/// Validated inputs for bound evaluation. `C >= 1` always holds for an
/// activation with unit Gaussian second moment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundInputs {
    pub m: usize,
    pub k: usize,
    #[serde(rename = "C")]
    pub c_bound: f64,
    pub eps: f64,
    pub delta: f64,
}

impl BoundInputs {
    pub fn new(m: usize, k: usize, c_bound: f64, eps: f64, delta: f64) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(Error::InvalidShape { m, k });
        }
        if !(c_bound >= 1.0) {
            return Err(Error::domain(format!(
                "C must be >= 1 (it is for any normalized activation), got {c_bound}"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::domain(format!("eps must be positive, got {eps}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(BoundInputs {
            m,
            k,
            c_bound,
            eps,
            delta,
        })
    }

    pub fn n(&self) -> usize {
        self.m.max(self.k)
    }
}

/// Minimum Gaussian fan-in width 4 C^4 log(8/delta) / eps^2.
pub fn daniely_min_width(c_bound: f64, eps: f64, delta: f64) -> Result<f64> {
    if !(c_bound > 0.0) {
        return Err(Error::domain(format!("C must be positive, got {c_bound}")));
    }
    if !(eps > 0.0) {
        return Err(Error::domain(format!("eps must be positive, got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(4.0 * c_bound.powi(4) * (8.0 / delta).ln() / (eps * eps))
}

/// Both sufficient conditions of the SUO kernel-approximation theorem, with
/// the two sides reported separately. Inequalities are inclusive.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SuoConditions {
    /// m^{5/2} / (n+1)^2
    pub condition1_lhs: f64,
    /// log(2/delta)
    pub condition1_rhs: f64,
    /// (n-1) / m^{3/4}
    pub condition2_lhs: f64,
    /// 8 sqrt(2) C^2 / eps
    pub condition2_rhs: f64,
    pub satisfied: bool,
}

pub fn suo_conditions(inputs: &BoundInputs) -> SuoConditions {
    let m = inputs.m as f64;
    let n = inputs.n() as f64;
    let condition1_lhs = m.powf(2.5) / ((n + 1.0) * (n + 1.0));
    let condition1_rhs = (2.0 / inputs.delta).ln();
    let condition2_lhs = (n - 1.0) / m.powf(0.75);
    let condition2_rhs = 8.0 * SQRT_2 * inputs.c_bound * inputs.c_bound / inputs.eps;
    SuoConditions {
        condition1_lhs,
        condition1_rhs,
        condition2_lhs,
        condition2_rhs,
        satisfied: condition1_lhs >= condition1_rhs && condition2_lhs >= condition2_rhs,
    }
}

/// |E[kappa] - kappa_tilde| <= 4 sqrt(2) sqrt(m) C^2 / (n - 1), n >= 2.
pub fn mean_bias_bound(m: usize, n: usize, c_bound: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain(format!("mean-bias bound needs n >= 2, got {n}")));
    }
    Ok(4.0 * SQRT_2 * (m as f64).sqrt() * c_bound * c_bound / (n as f64 - 1.0))
}

/// Wasserstein bound 4m / (n - 1), n >= 2.
pub fn wasserstein_bound(m: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain(format!(
            "Wasserstein bound needs n >= 2, got {n}"
        )));
    }
    Ok(4.0 * m as f64 / (n as f64 - 1.0))
}

/// Trace-embedding Wasserstein bound d sqrt(2 |A|) / (n - 1), n >= 2.
pub fn chatterjee_bound(d: usize, n: usize, opnorm_a: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain(format!(
            "trace-embedding bound needs n >= 2, got {n}"
        )));
    }
    if !(opnorm_a >= 0.0) {
        return Err(Error::domain(format!(
            "operator norm must be nonnegative, got {opnorm_a}"
        )));
    }
    Ok(d as f64 * (2.0 * opnorm_a).sqrt() / (n as f64 - 1.0))
}

/// Lipschitz constant bound sqrt(2) C^2 / sqrt(m) of the kernel contraction g.
pub fn lipschitz_g(c_bound: f64, m: usize) -> f64 {
    SQRT_2 * c_bound * c_bound / (m as f64).sqrt()
}

/// Lipschitz constant bound 2 C^2 sqrt(n/m) of h(M) = g(Vv, Vv').
pub fn lipschitz_h(c_bound: f64, m: usize, n: usize) -> f64 {
    2.0 * c_bound * c_bound * (n as f64 / m as f64).sqrt()
}

fn tail_exponent(r: f64, m: usize, n: usize, c_bound: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::domain(format!(
            "concentration tail needs n >= 3, got {n}"
        )));
    }
    if !(r >= 0.0) {
        return Err(Error::domain(format!("r must be nonnegative, got {r}")));
    }
    let (m, n) = (m as f64, n as f64);
    Ok(r * r * (n - 2.0) * m / (32.0 * n * c_bound.powi(4)))
}

/// Natural log of the concentration tail min(1, 2 exp(-r^2 (n-2) m / (32 n C^4))).
pub fn concentration_tail_log(r: f64, m: usize, n: usize, c_bound: f64) -> Result<f64> {
    Ok((LN_2 - tail_exponent(r, m, n, c_bound)?).min(0.0))
}

/// min(1, 2 exp(-r^2 (n-2) m / (32 n C^4))), n >= 3.
pub fn concentration_tail(r: f64, m: usize, n: usize, c_bound: f64) -> Result<f64> {
    Ok(concentration_tail_log(r, m, n, c_bound)?.exp())
}

/// The proof's anchor radius r* = 4 sqrt(2) m^{3/4} C^2 / (n - 1).
pub fn theorem2_r(m: usize, n: usize, c_bound: f64) -> f64 {
    4.0 * SQRT_2 * (m as f64).powf(0.75) * c_bound * c_bound / (n as f64 - 1.0)
}

/// Smallest eps admitted by condition 2: 8 sqrt(2) C^2 m^{3/4} / (n - 1).
pub fn theorem2_epsilon_threshold(m: usize, n: usize, c_bound: f64) -> f64 {
    2.0 * theorem2_r(m, n, c_bound)
}

/// Natural log of the failure probability the theorem chain implies at any
/// admissible eps: log of min(1, 2 exp(-(n-2) m^{5/2} / (n (n-1)^2))).
pub fn theorem2_delta_implied_log(m: usize, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::domain(format!(
            "implied delta needs n >= 3, got {n}"
        )));
    }
    let (m, n) = (m as f64, n as f64);
    let exponent = (n - 2.0) * m.powf(2.5) / (n * (n - 1.0) * (n - 1.0));
    Ok((LN_2 - exponent).min(0.0))
}

pub fn theorem2_delta_implied(m: usize, n: usize) -> Result<f64> {
    Ok(theorem2_delta_implied_log(m, n)?.exp())
}

/// All bound quantities for one parameter point, with stable JSON field names.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub n: usize,
    pub daniely_min_m: f64,
    pub suo: SuoConditions,
    pub mean_bias: f64,
    pub wasserstein: f64,
    pub lipschitz_g: f64,
    pub lipschitz_h: f64,
    pub theorem_r: f64,
    pub tail_at_eps: f64,
    pub tail_at_theorem_r: f64,
    pub delta_implied: f64,
}

/// Evaluates every bound at the given inputs; requires n >= 3 so the
/// concentration quantities are defined.
pub fn evaluate_bounds(inputs: &BoundInputs) -> Result<BoundReport> {
    let n = inputs.n();
    let c = inputs.c_bound;
    Ok(BoundReport {
        inputs: *inputs,
        n,
        daniely_min_m: daniely_min_width(c, inputs.eps, inputs.delta)?,
        suo: suo_conditions(inputs),
        mean_bias: mean_bias_bound(inputs.m, n, c)?,
        wasserstein: wasserstein_bound(inputs.m, n)?,
        lipschitz_g: lipschitz_g(c, inputs.m),
        lipschitz_h: lipschitz_h(c, inputs.m, n),
        theorem_r: theorem2_r(inputs.m, n, c),
        tail_at_eps: concentration_tail(inputs.eps, inputs.m, n, c)?,
        tail_at_theorem_r: concentration_tail(theorem2_r(inputs.m, n, c), inputs.m, n, c)?,
        delta_implied: theorem2_delta_implied(inputs.m, n)?,
    })
}

fn check_embedding_dims(
    orthogonal: &DMatrix<f64>,
    pair: &InputPair,
    shape: MatrixShape,
) -> Result<()> {
    let n = shape.n();
    if orthogonal.nrows() != n || orthogonal.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{n} orthogonal matrix"),
            got: format!("{}x{}", orthogonal.nrows(), orthogonal.ncols()),
        });
    }
    if pair.dim() != shape.k() {
        return Err(Error::ShapeMismatch {
            expected: format!("pair of dimension {}", shape.k()),
            got: format!("{}", pair.dim()),
        });
    }
    Ok(())
}

fn embedded_preactivations(
    orthogonal: &DMatrix<f64>,
    pair: &InputPair,
    shape: MatrixShape,
) -> (DVector<f64>, DVector<f64>) {
    let (m, k, n) = (shape.m(), shape.k(), shape.n());
    let scale = (n as f64 / k as f64).sqrt();
    let block = orthogonal.view((0, 0), (m, k));
    let x = (block * pair.z()) * scale;
    let x_prime = (block * pair.z_prime()) * scale;
    (x, x_prime)
}

/// h(M) = g(Vv, Vv') where V is the top-left m x k block of sqrt(n/k) M.
pub fn embedded_kernel(
    orthogonal: &DMatrix<f64>,
    pair: &InputPair,
    activation: &Activation,
    shape: MatrixShape,
) -> Result<f64> {
    check_embedding_dims(orthogonal, pair, shape)?;
    let (x, x_prime) = embedded_preactivations(orthogonal, pair, shape);
    Ok(crate::kernel::empirical_kernel_on_preactivations(
        &x, &x_prime, activation,
    ))
}

/// Gradient of [`embedded_kernel`] with respect to the n x n matrix:
/// (sqrt(n)/(m sqrt(k))) [(phi(Vv') .* phi'(Vv)) v^T + (phi(Vv) .* phi'(Vv')) v'^T]
/// on the top-left m x k block, zero elsewhere. Its Hilbert–Schmidt norm is
/// bounded by [`lipschitz_h`] for bounded activations.
pub fn gradient_h(
    orthogonal: &DMatrix<f64>,
    pair: &InputPair,
    activation: &Activation,
    shape: MatrixShape,
) -> Result<DMatrix<f64>> {
    check_embedding_dims(orthogonal, pair, shape)?;
    let (m, k, n) = (shape.m(), shape.k(), shape.n());
    let (x, x_prime) = embedded_preactivations(orthogonal, pair, shape);
    let coeff = (n as f64).sqrt() / (m as f64 * (k as f64).sqrt());
    let mut grad = DMatrix::<f64>::zeros(n, n);
    for i in 0..m {
        let s1 = activation.eval(x_prime[i]) * activation.deriv(x[i]);
        let s2 = activation.eval(x[i]) * activation.deriv(x_prime[i]);
        for j in 0..k {
            grad[(i, j)] = coeff * (s1 * pair.z()[j] + s2 * pair.z_prime()[j]);
        }
    }
    Ok(grad)
}
