//! Activation functions with exact derivatives, certified sup-norm bounds,
//! and Gaussian second-moment normalization.
//!
//! Every activation in this module is of the form `s * phi(alpha * x)` for a
//! builtin base `phi`; normalization adjusts `s`, input rescaling adjusts
//! `alpha`, and the stored bounds are updated exactly alongside.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use std::f64::consts::{FRAC_2_SQRT_PI, FRAC_PI_4, SQRT_2};

use crate::error::{Error, Result};
use crate::quadrature;

/// Largest |erf''| (attained at x = 1/sqrt(2)); frozen from 30-digit arithmetic.
const ERF_SECOND_DERIV_BOUND: f64 = 0.967_882_898_076_573_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    Erf,
    Tanh,
    ScaledShiftedCos,
    Identity,
    Relu,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Erf => "erf",
            Builtin::Tanh => "tanh",
            Builtin::ScaledShiftedCos => "scaled-shifted-cos",
            Builtin::Identity => "identity",
            Builtin::Relu => "relu",
        }
    }

    fn eval(self, x: f64) -> f64 {
        match self {
            Builtin::Erf => erf(x),
            Builtin::Tanh => x.tanh(),
            Builtin::ScaledShiftedCos => SQRT_2 * (x + FRAC_PI_4).cos(),
            Builtin::Identity => x,
            Builtin::Relu => x.max(0.0),
        }
    }

    fn deriv(self, x: f64) -> f64 {
        match self {
            Builtin::Erf => FRAC_2_SQRT_PI * (-x * x).exp(),
            Builtin::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Builtin::ScaledShiftedCos => -SQRT_2 * (x + FRAC_PI_4).sin(),
            Builtin::Identity => 1.0,
            Builtin::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn value_bound(self) -> f64 {
        match self {
            Builtin::Erf => 1.0,
            Builtin::Tanh => 1.0,
            Builtin::ScaledShiftedCos => SQRT_2,
            Builtin::Identity | Builtin::Relu => f64::INFINITY,
        }
    }

    fn deriv_bound(self) -> f64 {
        match self {
            Builtin::Erf => FRAC_2_SQRT_PI,
            Builtin::Tanh => 1.0,
            Builtin::ScaledShiftedCos => SQRT_2,
            Builtin::Identity => 1.0,
            Builtin::Relu => 1.0,
        }
    }

    fn second_deriv_bound(self) -> Option<f64> {
        match self {
            Builtin::Erf => Some(ERF_SECOND_DERIV_BOUND),
            Builtin::Tanh => Some(4.0 / (3.0 * 3.0_f64.sqrt())),
            Builtin::ScaledShiftedCos => Some(SQRT_2),
            Builtin::Identity => Some(0.0),
            Builtin::Relu => None, // derivative has a jump
        }
    }

    /// E[phi(x)^2] = 1 holds exactly for these bases.
    fn unit_second_moment(self) -> bool {
        matches!(self, Builtin::Identity | Builtin::ScaledShiftedCos)
    }
}

impl std::str::FromStr for Builtin {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erf" => Ok(Builtin::Erf),
            "tanh" => Ok(Builtin::Tanh),
            "scaled-shifted-cos" => Ok(Builtin::ScaledShiftedCos),
            "identity" => Ok(Builtin::Identity),
            "relu" => Ok(Builtin::Relu),
            other => Err(Error::Config(format!(
                "unknown activation `{other}`; expected one of erf, tanh, scaled-shifted-cos, identity, relu"
            ))),
        }
    }
}

/// A scalar activation `x -> s * phi(alpha x)` with exact derivative and
/// tracked sup-norm bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    base: Builtin,
    out_scale: f64,
    in_scale: f64,
    normalized: bool,
}

impl Activation {
    /// The named activation with its documented bounds. Identity and Relu are
    /// unbounded references: their `sup_bound_c` is infinite and bound
    /// evaluation must reject them.
    pub fn builtin(base: Builtin) -> Self {
        Activation {
            base,
            out_scale: 1.0,
            in_scale: 1.0,
            normalized: base.unit_second_moment(),
        }
    }

    pub fn base(&self) -> Builtin {
        self.base
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.out_scale * self.base.eval(self.in_scale * x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.out_scale * self.in_scale * self.base.deriv(self.in_scale * x)
    }

    /// Certified bound on `|phi|`.
    pub fn value_bound(&self) -> f64 {
        self.out_scale * self.base.value_bound()
    }

    /// Certified bound on `|phi'|`.
    pub fn deriv_bound(&self) -> f64 {
        self.out_scale * self.in_scale * self.base.deriv_bound()
    }

    /// Joint bound C with `|phi| <= C` and `|phi'| <= C`; +inf when unbounded.
    pub fn sup_bound_c(&self) -> f64 {
        self.value_bound().max(self.deriv_bound())
    }

    pub fn second_deriv_bound(&self) -> Option<f64> {
        self.base
            .second_deriv_bound()
            .map(|b| self.out_scale * self.in_scale * self.in_scale * b)
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_bound_c().is_finite()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Requires a finite joint bound; errors with the activation's name otherwise.
    pub fn require_bounded(&self) -> Result<f64> {
        let c = self.sup_bound_c();
        if c.is_finite() {
            Ok(c)
        } else {
            Err(Error::UnboundedActivation { name: self.name() })
        }
    }

    /// Gaussian second moment E[phi(x)^2] by quadrature.
    pub fn second_moment(&self, order: usize) -> f64 {
        quadrature::rule(order).expect(|x| {
            let v = self.eval(x);
            v * v
        })
    }

    /// Rescales to E[phi(x)^2] = 1, adjusting the stored bounds by the same factor.
    pub fn normalize(&self, order: usize) -> Result<Activation> {
        let q = self.second_moment(order);
        if !(q > 1e-12) {
            return Err(Error::VanishingSecondMoment { value: q });
        }
        let mut out = self.clone();
        out.out_scale /= q.sqrt();
        out.normalized = true;
        Ok(out)
    }

    /// `psi(x) = phi(alpha x)`: the derivative bound scales by alpha and the
    /// joint bound becomes `max(|phi|_inf, alpha |phi'|_inf)`.
    pub fn alpha_rescale(&self, alpha: f64) -> Result<Activation> {
        if !(alpha > 0.0) {
            return Err(Error::NonPositiveAlpha { alpha });
        }
        let mut out = self.clone();
        out.in_scale *= alpha;
        if alpha != 1.0 {
            out.normalized = false;
        }
        Ok(out)
    }

    pub fn name(&self) -> String {
        let mut n = self.base.name().to_string();
        if self.normalized && !self.base.unit_second_moment() {
            n.push_str("(normalized)");
        }
        if self.in_scale != 1.0 {
            n.push_str(&format!("(alpha={})", self.in_scale));
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    // Frozen with 30-digit arithmetic: E_{x~N(0,1)}[tanh(x)^2] and 1/sqrt of it.
    const TANH_SECOND_MOMENT: f64 = 0.394_294_490_397_841_17;
    const TANH_NORMALIZE_SCALE: f64 = 1.592_537_419_722_831_4;

    fn all_builtins() -> Vec<Activation> {
        [
            Builtin::Erf,
            Builtin::Tanh,
            Builtin::ScaledShiftedCos,
            Builtin::Identity,
            Builtin::Relu,
        ]
        .into_iter()
        .map(Activation::builtin)
        .collect()
    }

    #[test]
    fn erf_point_values() {
        let a = Activation::builtin(Builtin::Erf);
        assert_eq!(a.eval(0.0), 0.0);
        assert_abs_diff_eq!(a.deriv(0.0), FRAC_2_SQRT_PI, epsilon = 1e-15);
        assert_abs_diff_eq!(a.sup_bound_c(), FRAC_2_SQRT_PI, epsilon = 1e-15);
    }

    #[test]
    fn tanh_bounds() {
        let a = Activation::builtin(Builtin::Tanh);
        assert_eq!(a.sup_bound_c(), 1.0);
        for i in 0..1000 {
            let x = -20.0 + i as f64 * 0.04;
            assert!(a.eval(x).abs() <= 1.0);
            assert!(a.deriv(x).abs() <= 1.0);
        }
    }

    #[test]
    fn identity_is_unbounded_and_rejected_by_bound_consumers() {
        let a = Activation::builtin(Builtin::Identity);
        assert!(a.sup_bound_c().is_infinite());
        assert!(matches!(
            a.require_bounded(),
            Err(Error::UnboundedActivation { .. })
        ));
    }

    #[test]
    fn normalize_identity_is_identity() {
        let a = Activation::builtin(Builtin::Identity);
        let n = a.normalize(quadrature::MOMENT_ORDER).unwrap();
        for x in [-3.0, -0.5, 0.0, 1.7] {
            assert_abs_diff_eq!(n.eval(x), x, epsilon = 1e-10);
        }
    }

    #[test]
    fn normalize_tanh_matches_frozen_oracle() {
        let a = Activation::builtin(Builtin::Tanh);
        assert_abs_diff_eq!(
            a.second_moment(quadrature::MOMENT_ORDER),
            TANH_SECOND_MOMENT,
            epsilon = 1e-10
        );
        let n = a.normalize(quadrature::MOMENT_ORDER).unwrap();
        assert_abs_diff_eq!(n.eval(1.0) / 1.0_f64.tanh(), TANH_NORMALIZE_SCALE, epsilon = 1e-9);
        assert!(n.is_normalized());
        // Re-check the unit second moment with an independent (larger) order.
        assert_abs_diff_eq!(n.second_moment(192), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn normalize_is_idempotent() {
        let n = Activation::builtin(Builtin::Tanh)
            .normalize(quadrature::MOMENT_ORDER)
            .unwrap();
        let n2 = n.normalize(quadrature::MOMENT_ORDER).unwrap();
        for x in [-2.0, -0.3, 0.0, 0.9, 4.0] {
            assert_abs_diff_eq!(n.eval(x), n2.eval(x), epsilon = 1e-10);
        }
    }

    #[test]
    fn scaled_shifted_cos_has_unit_second_moment() {
        let a = Activation::builtin(Builtin::ScaledShiftedCos);
        assert!(a.is_normalized());
        assert_abs_diff_eq!(a.second_moment(quadrature::MOMENT_ORDER), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn alpha_rescale_identity_case() {
        let a = Activation::builtin(Builtin::Tanh);
        let r = a.alpha_rescale(1.0).unwrap();
        assert_eq!(a, r);
    }

    #[test]
    fn alpha_rescale_tanh_attains_stored_bound() {
        let a = Activation::builtin(Builtin::Tanh).alpha_rescale(2.0).unwrap();
        assert_abs_diff_eq!(a.deriv(0.0), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.sup_bound_c(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn alpha_rescale_erf_is_pointwise_composition() {
        let a = Activation::builtin(Builtin::Erf).alpha_rescale(0.5).unwrap();
        for x in [-3.0, -1.0, 0.0, 0.25, 2.0] {
            assert_abs_diff_eq!(a.eval(x), erf(0.5 * x), epsilon = 1e-15);
        }
        assert!(matches!(
            Activation::builtin(Builtin::Erf).alpha_rescale(0.0),
            Err(Error::NonPositiveAlpha { .. })
        ));
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let step = 1e-5;
        let acts = [
            Activation::builtin(Builtin::Erf),
            Activation::builtin(Builtin::Tanh),
            Activation::builtin(Builtin::ScaledShiftedCos),
            Activation::builtin(Builtin::Identity),
            Activation::builtin(Builtin::Tanh)
                .normalize(quadrature::MOMENT_ORDER)
                .unwrap()
                .alpha_rescale(1.5)
                .unwrap(),
        ];
        for a in &acts {
            for i in 0..200 {
                let x = -4.0 + i as f64 * 0.04;
                let fd = (a.eval(x + step) - a.eval(x - step)) / (2.0 * step);
                let d = a.deriv(x);
                let denom = d.abs().max(1e-3);
                assert!(
                    (fd - d).abs() / denom <= 1e-6,
                    "{} at x={x}: fd={fd}, exact={d}",
                    a.name()
                );
            }
        }
    }

    #[test]
    fn randomized_search_never_exceeds_stored_bounds() {
        let mut rng = crate::seeds::trial_rng(21, 0, 0);
        let acts: Vec<Activation> = all_builtins()
            .into_iter()
            .chain([
                Activation::builtin(Builtin::Tanh)
                    .normalize(quadrature::MOMENT_ORDER)
                    .unwrap(),
                Activation::builtin(Builtin::Erf).alpha_rescale(2.5).unwrap(),
            ])
            .collect();
        for a in &acts {
            let vb = a.value_bound();
            let db = a.deriv_bound();
            for i in 0..1_000_000u32 {
                // Mixture of Gaussian and wide-uniform probes.
                let x: f64 = if i % 2 == 0 {
                    rng.sample::<f64, _>(StandardNormal) * 3.0
                } else {
                    rng.random_range(-40.0..40.0)
                };
                if vb.is_finite() {
                    assert!(a.eval(x).abs() <= vb * (1.0 + 1e-12));
                }
                if db.is_finite() {
                    assert!(a.deriv(x).abs() <= db * (1.0 + 1e-12));
                }
            }
        }
    }
}
