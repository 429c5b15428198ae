//! Monte Carlo experiment harness: runs seeded trial batches against each
//! bound and emits structured, exactly-reproducible results.
//!
//! All assertions are one-sided: the theory provides upper bounds, so an
//! experiment can falsify a bound but never pins an exact value. Frequencies
//! carry Wilson 99% intervals and means carry 3-sigma margins.

mod checks;
mod experiments;
mod pair_sampler;
pub mod report;
mod wasserstein;

pub use checks::{
    determinant_split_test, embedding_check, rotation_invariance_check, rotation_to_span,
    DeterminantReport, EmbeddingReport, RotationReport,
};
pub use experiments::{
    kernel_error_experiment, mean_bias_experiment, run_trial_batch, theorem2_sweep,
    ExperimentCell, KernelErrorOutcome, MeanBiasOutcome, SweepOutcome, SweepParams, SweepRow,
    TailAssertion, TailRow,
};
pub use pair_sampler::{PairSampler, SampleRoute};
pub use wasserstein::{
    wasserstein_experiment, MarginalRow, ProbeRow, WassersteinOutcome, WassersteinParams,
};

use serde::Serialize;

use crate::stats;

/// One experiment assertion with its outcome, printed as a pass/fail line.
#[derive(Debug, Clone, Serialize)]
pub struct AssertionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl AssertionResult {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        AssertionResult {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

/// Summary statistics of one trial batch, recomputable from the records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub trials: u32,
    pub mean_kappa: f64,
    pub std_kappa: f64,
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
    pub error_q50: f64,
    pub error_q90: f64,
    pub error_q99: f64,
}

impl BatchSummary {
    fn compute(kappa_tilde: f64, kappas: &[f64]) -> Self {
        let (mean_kappa, std_kappa) = stats::mean_and_std(kappas);
        let errors: Vec<f64> = kappas.iter().map(|&k| (k - kappa_tilde).abs()).collect();
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        BatchSummary {
            trials: kappas.len() as u32,
            mean_kappa,
            std_kappa,
            mean_abs_error: stats::mean(&errors),
            max_abs_error: *sorted.last().unwrap(),
            error_q50: stats::quantile_sorted(&sorted, 0.50),
            error_q90: stats::quantile_sorted(&sorted, 0.90),
            error_q99: stats::quantile_sorted(&sorted, 0.99),
        }
    }
}

/// Per-trial kernel values for one (scheme, shape, pair) cell, together with
/// the reference approximate-kernel value and summary statistics.
///
/// Trial `t` always uses the ChaCha stream `(cell_index, t)` of the root seed,
/// so the batch is reproducible and order-independent.
#[derive(Debug, Clone, Serialize)]
pub struct TrialBatch {
    pub scheme: crate::sampler::Scheme,
    pub m: usize,
    pub k: usize,
    pub c: f64,
    pub alpha: f64,
    pub activation: String,
    pub route: SampleRoute,
    pub root_seed: u64,
    pub cell_index: u32,
    pub kappa_tilde: f64,
    #[serde(skip)]
    pub kappas: Vec<f64>,
    pub summary: BatchSummary,
}

impl TrialBatch {
    pub(crate) fn new(
        scheme: crate::sampler::Scheme,
        shape: crate::sampler::MatrixShape,
        pair: &crate::kernel::InputPair,
        activation: &crate::activation::Activation,
        route: SampleRoute,
        root_seed: u64,
        cell_index: u32,
        kappa_tilde: f64,
        kappas: Vec<f64>,
    ) -> Self {
        let summary = BatchSummary::compute(kappa_tilde, &kappas);
        TrialBatch {
            scheme,
            m: shape.m(),
            k: shape.k(),
            c: pair.correlation(),
            alpha: pair.alpha(),
            activation: activation.name(),
            route,
            root_seed,
            cell_index,
            kappa_tilde,
            kappas,
            summary,
        }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.kappas
            .iter()
            .map(|&k| (k - self.kappa_tilde).abs())
            .collect()
    }

    /// Number of trials with |kappa - kappa_tilde| >= r.
    pub fn tail_count(&self, r: f64) -> u64 {
        self.kappas
            .iter()
            .filter(|&&k| (k - self.kappa_tilde).abs() >= r)
            .count() as u64
    }

    pub fn recompute_summary(&self) -> BatchSummary {
        BatchSummary::compute(self.kappa_tilde, &self.kappas)
    }
}
