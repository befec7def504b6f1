//! Recovery of `P_m` from voltages by rebinning.
//!
//! Once the baseline mean has been subtracted, voltage `v` is assigned to
//! `m = round(v/γ̄)`: bin `m` covers `[(m − ½)γ̄, (m + ½)γ̄)`. Samples below
//! `−γ̄/2` are folded into `m = 0` and counted as underflow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::DetectedPhotonDistribution;
use crate::detector::VoltageEnsemble;
use crate::error::{Error, Result};
use crate::moments::CHUNK;
use crate::summation::NeumaierSum;

/// Largest bin index `rebin` will allocate.
pub const MAX_BIN: usize = 1 << 26;

/// Coverage factor of the self-consistency test.
pub const SELF_CONSISTENCY_SIGMAS: f64 = 5.0;

/// Shifts every sample by `−dark_mean`.
pub fn subtract_offset(mut ensemble: VoltageEnsemble, dark_mean: f64) -> Result<VoltageEnsemble> {
    if !dark_mean.is_finite() {
        return Err(Error::invalid("dark_mean", "must be finite"));
    }
    if dark_mean != 0.0 {
        ensemble.samples.par_iter_mut().for_each(|v| *v -= dark_mean);
    }
    Ok(ensemble)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub pmf_hat: Vec<f64>,
    pub counts: Vec<u64>,
    pub gamma_bar_used: f64,
    /// Number of samples below `−γ̄/2`, already included in `counts[0]`.
    pub underflow_count: u64,
    pub underflow_fraction: f64,
    pub mean_m_hat: f64,
    pub n_samples: u64,
    pub tv_distance: Option<f64>,
    pub fidelity: Option<f64>,
}

impl ReconstructionResult {
    pub fn prob(&self, m: usize) -> f64 {
        self.pmf_hat.get(m).copied().unwrap_or(0.0)
    }

    /// Fills in `tv_distance` and `fidelity` against a reference `P_m`.
    pub fn with_reference(mut self, reference: &DetectedPhotonDistribution) -> Self {
        let metrics = compare(&self, reference);
        self.tv_distance = Some(metrics.tv_distance);
        self.fidelity = Some(metrics.fidelity);
        self
    }
}

#[derive(Default)]
struct Tally {
    counts: Vec<u64>,
    underflow: u64,
    bad: Option<f64>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.bad = self.bad.or(other.bad);
        self
    }
}

/// Bin index of `v` for bin width `gamma_bar`; negative for underflow.
#[inline]
pub fn bin_index(v: f64, gamma_bar: f64) -> f64 {
    (v / gamma_bar + 0.5).floor()
}

/// Histogram of `round(v/γ̄)` over an offset-subtracted ensemble.
pub fn rebin(ensemble: &VoltageEnsemble, gamma_bar: f64) -> Result<ReconstructionResult> {
    if !(gamma_bar.is_finite() && gamma_bar > 0.0) {
        return Err(Error::invalid("gamma_bar", format!("must be finite and > 0, got {gamma_bar}")));
    }
    let n = ensemble.n_samples();
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let tally = ensemble
        .samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut t = Tally::default();
            for &v in chunk {
                let k = bin_index(v, gamma_bar);
                if !k.is_finite() || k > MAX_BIN as f64 {
                    t.bad.get_or_insert(v);
                    continue;
                }
                let m = if k < 0.0 {
                    t.underflow += 1;
                    0
                } else {
                    k as usize
                };
                if m >= t.counts.len() {
                    t.counts.resize(m + 1, 0);
                }
                t.counts[m] += 1;
            }
            t
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Tally::default(), Tally::merge);
    if let Some(v) = tally.bad {
        return Err(Error::invalid(
            "samples",
            format!("voltage {v} is not finite or lies beyond bin {MAX_BIN}"),
        ));
    }
    let total = n as f64;
    let pmf_hat: Vec<f64> = tally.counts.iter().map(|&c| c as f64 / total).collect();
    let mean_m_hat = tally
        .counts
        .iter()
        .enumerate()
        .map(|(m, &c)| m as f64 * c as f64)
        .sum::<NeumaierSum>()
        .value()
        / total;
    Ok(ReconstructionResult {
        pmf_hat,
        counts: tally.counts,
        gamma_bar_used: gamma_bar,
        underflow_count: tally.underflow,
        underflow_fraction: tally.underflow as f64 / total,
        mean_m_hat,
        n_samples: n as u64,
        tv_distance: None,
        fidelity: None,
    })
}

/// Agreement between a reconstruction and a reference `P_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMetrics {
    pub tv_distance: f64,
    /// Bhattacharyya coefficient `Σ √(p̂_m p_m)`.
    pub fidelity: f64,
    /// `(p̂_m − p_m)/√(p_m(1 − p_m)/N)`; `None` where the reference
    /// probability is 0 or 1.
    pub z_scores: Vec<Option<f64>>,
    pub max_abs_z: f64,
}

pub fn compare(result: &ReconstructionResult, reference: &DetectedPhotonDistribution) -> ComparisonMetrics {
    let len = result.pmf_hat.len().max(reference.pmf().len());
    let n = result.n_samples as f64;
    let mut tv = NeumaierSum::new();
    let mut fid = NeumaierSum::new();
    let mut z_scores = Vec::with_capacity(len);
    for m in 0..len {
        let (p_hat, p) = (result.prob(m), reference.prob(m));
        tv.push((p_hat - p).abs());
        fid.push((p_hat * p).sqrt());
        let var = p * (1.0 - p) / n;
        z_scores.push((var > 0.0).then(|| (p_hat - p) / var.sqrt()));
    }
    let max_abs_z = z_scores.iter().flatten().fold(0.0f64, |a, z| a.max(z.abs()));
    ComparisonMetrics {
        tv_distance: 0.5 * tv.value(),
        fidelity: fid.value(),
        z_scores,
        max_abs_z,
    }
}

/// A conversion factor with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaBarEstimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistencyReport {
    pub mean_m_hat: f64,
    /// `⟨v⟩/γ̄_ref`.
    pub expected_mean_m: f64,
    pub difference: f64,
    pub tolerance: f64,
    pub gamma_bar_ref: f64,
    pub pass: bool,
}

/// Checks that the mean of the reconstructed PMF equals `⟨v⟩/γ̄_ref`.
///
/// `gamma_bar_ref` should be a conversion factor in which `σ` does not
/// enter, such as `⟨v⟩/⟨m⟩` from the mean-constancy check. When the bins
/// were built with an intercept inflated by `σ²/γ̄`, `⟨m̂⟩` falls short of
/// the reference by the same factor and the check fails.
///
/// The tolerance is `5·SE` of the difference plus `0.5·underflow_fraction`.
/// The SE combines the errors of `⟨v⟩`, of both conversion factors, and
/// the rounding term, which is bounded by `½/√N`.
pub fn self_consistency_check(
    result: &ReconstructionResult,
    mean_v: f64,
    mean_v_se: f64,
    gamma_bar_ref: GammaBarEstimate,
    gamma_bar_used_se: f64,
) -> Result<SelfConsistencyReport> {
    if !(gamma_bar_ref.value > 0.0 && gamma_bar_ref.value.is_finite()) {
        return Err(Error::invalid("gamma_bar_ref", "must be finite and > 0"));
    }
    let g = gamma_bar_ref.value;
    let expected = mean_v / g;
    let se = (mean_v_se / g)
        .hypot(mean_v * gamma_bar_ref.se / (g * g))
        .hypot(result.mean_m_hat * gamma_bar_used_se / result.gamma_bar_used)
        .hypot(0.5 / (result.n_samples as f64).sqrt());
    let tolerance = SELF_CONSISTENCY_SIGMAS * se + 0.5 * result.underflow_fraction;
    let difference = result.mean_m_hat - expected;
    Ok(SelfConsistencyReport {
        mean_m_hat: result.mean_m_hat,
        expected_mean_m: expected,
        difference,
        tolerance,
        gamma_bar_ref: g,
        pass: difference.abs() <= tolerance,
    })
}
