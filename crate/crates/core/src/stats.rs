//! Statistical helpers: deterministic summaries, proportion intervals,
//! two-sample Kolmogorov–Smirnov tests, and exact one-dimensional Wasserstein
//! distance against a centered Gaussian.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

/// Two-sided z for a 99% normal interval.
pub const Z_99: f64 = 2.575_829_303_548_900_4;

/// Fixed-order pairwise summation; deterministic and more accurate than a
/// naive left fold for long vectors.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    pairwise_sum(xs) / xs.len() as f64
}

/// Returns (mean, sample standard deviation). The deviation is 0 for n < 2.
pub fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&sq) / (xs.len() - 1) as f64;
    (m, var.max(0.0).sqrt())
}

/// Linear-interpolation quantile of an ascending-sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&q));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Half-width of the 99% normal-approximation interval around 0.5.
pub fn binomial_half_width_99(trials: u64) -> f64 {
    Z_99 * (0.25 / trials as f64).sqrt()
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    n.inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs: Vec<f64> = a.to_vec();
    let mut ys: Vec<f64> = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n1, n2) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let (x, y) = (xs[i], ys[j]);
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        let diff = (i as f64 / n1 as f64 - j as f64 / n2 as f64).abs();
        d = d.max(diff);
    }
    let ne = (n1 as f64 * n2 as f64) / (n1 + n2) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    KsResult {
        statistic: d,
        p_value: ks_tail(lambda),
        n1,
        n2,
    }
}

/// Kolmogorov distribution tail Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} e^{-2 j^2 lambda^2}.
pub fn ks_tail(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Antiderivative of the N(0, sigma^2) CDF: G(x) = int_{-inf}^x F.
fn cdf_antiderivative(x: f64, sigma: f64) -> f64 {
    let u = x / sigma;
    sigma * (u * std_normal_cdf(u) + std_normal_pdf(u))
}

/// Exact 1-Wasserstein distance between the empirical measure of `sorted`
/// (ascending) and N(0, sigma^2), by piecewise integration of |F_hat - F|
/// with sign changes split at the Gaussian quantile of each step level.
pub fn wasserstein_to_normal(sorted: &[f64], sigma: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!(sigma > 0.0);
    let n = sorted.len() as f64;
    let g = |x: f64| cdf_antiderivative(x, sigma);
    let f = |x: f64| std_normal_cdf(x / sigma);

    // Tails: F_hat is 0 left of the sample and 1 right of it.
    let mut total = g(sorted[0]);
    total += g(sorted[sorted.len() - 1]) - sorted[sorted.len() - 1];

    for (idx, win) in sorted.windows(2).enumerate() {
        let (a, b) = (win[0], win[1]);
        if a >= b {
            continue; // ties
        }
        let level = (idx + 1) as f64 / n;
        let seg = g(b) - g(a);
        if f(a) >= level {
            // F >= level on the whole segment.
            total += seg - level * (b - a);
        } else if f(b) <= level {
            total += level * (b - a) - seg;
        } else {
            let split = sigma * std_normal_quantile(level);
            let left = level * (split - a) - (g(split) - g(a));
            let right = (g(b) - g(split)) - level * (b - split);
            total += left.max(0.0) + right.max(0.0);
        }
    }
    total.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert_abs_diff_eq!(pairwise_sum(&xs), naive, epsilon = 1e-9);
    }

    #[test]
    fn wilson_interval_brackets_the_point_estimate() {
        let (lo, hi) = wilson_interval(13, 100, Z_99);
        assert!(lo < 0.13 && 0.13 < hi);
        let (lo0, _) = wilson_interval(0, 10_000, Z_99);
        assert_eq!(lo0, 0.0);
    }

    #[test]
    fn z99_matches_the_normal_quantile() {
        assert_abs_diff_eq!(std_normal_quantile(0.995), Z_99, epsilon = 1e-6);
    }

    #[test]
    fn ks_same_distribution_has_large_p() {
        let mut rng = crate::seeds::trial_rng(11, 0, 0);
        let a: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        let res = ks_two_sample(&a, &b);
        assert!(res.p_value > 0.001, "p = {}", res.p_value);
    }

    #[test]
    fn ks_detects_a_shift() {
        let mut rng = crate::seeds::trial_rng(12, 0, 0);
        let a: Vec<f64> = (0..4000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..4000)
            .map(|_| rng.sample::<f64, _>(StandardNormal) + 0.5)
            .collect();
        let res = ks_two_sample(&a, &b);
        assert!(res.p_value < 1e-6, "p = {}", res.p_value);
    }

    #[test]
    fn wasserstein_matches_grid_integration() {
        // Small sample; brute-force the integral of |F_hat - Phi| on a fine grid.
        let mut sample = vec![-1.3, -0.2, 0.1, 0.4, 2.0];
        sample.sort_by(f64::total_cmp);
        let exact = wasserstein_to_normal(&sample, 1.0);
        let n = sample.len() as f64;
        let f_hat = |x: f64| sample.iter().filter(|&&s| s <= x).count() as f64 / n;
        let steps = 4_000_000;
        let (lo, hi) = (-10.0, 10.0);
        let h = (hi - lo) / steps as f64;
        let mut brute = 0.0;
        for i in 0..steps {
            let x = lo + (i as f64 + 0.5) * h;
            brute += (f_hat(x) - std_normal_cdf(x)).abs() * h;
        }
        assert_abs_diff_eq!(exact, brute, epsilon = 1e-5);
    }

    #[test]
    fn wasserstein_of_shifted_gaussian_is_the_shift() {
        let mut rng = crate::seeds::trial_rng(13, 0, 0);
        let mut xs: Vec<f64> = (0..200_000)
            .map(|_| rng.sample::<f64, _>(StandardNormal) + 1.0)
            .collect();
        xs.sort_by(f64::total_cmp);
        let w = wasserstein_to_normal(&xs, 1.0);
        assert!((w - 1.0).abs() < 0.02, "w = {w}");
    }

    #[test]
    fn wasserstein_of_matching_gaussian_is_small() {
        let mut rng = crate::seeds::trial_rng(14, 0, 0);
        let mut xs: Vec<f64> = (0..200_000).map(|_| rng.sample(StandardNormal)).collect();
        xs.sort_by(f64::total_cmp);
        let w = wasserstein_to_normal(&xs, 1.0);
        assert!(w < 0.01, "w = {w}");
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        assert_abs_diff_eq!(quantile_sorted(&xs, 0.5), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile_sorted(&xs, 0.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile_sorted(&xs, 1.0), 3.0, epsilon = 1e-15);
    }
}
