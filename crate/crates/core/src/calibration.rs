//! Self-calibration from an efficiency sweep.
//!
//! For light of fixed statistics measured at several efficiencies `η`,
//!
//! ```text
//! μ₂(v)/⟨v⟩ = (Q/⟨n⟩)·⟨v⟩ + γ̄(1 + σ²/γ̄²)
//! ```
//!
//! is a straight line in `⟨v⟩`: the slope carries the Mandel parameter and
//! the intercept gives the conversion factor `γ̄` when `σ ≪ γ̄`.

use serde::{Deserialize, Serialize};

use crate::detector::{simulate_ensemble, DarkNoiseModel, GainModel, VoltageEnsemble};
use crate::error::{Error, Result};
use crate::moments::{block_power_sums, jackknife_from_blocks, PowerSums};
use crate::rng::{derive_seed, labels};
use crate::source::PhotonNumberDistribution;
use crate::summation::NeumaierSum;

/// Number of non-overlapping jackknife blocks per ensemble.
pub const JACKKNIFE_BLOCKS: usize = 20;

/// Smallest ensemble accepted by [`run_eta_series`].
pub const MIN_SERIES_SAMPLES: usize = 10_000;

/// Coverage factor for the gain-scaling ratio test.
pub const GAIN_SCALING_SIGMAS: f64 = 3.0;

/// Coverage factor for the mean-constancy test.
pub const MEAN_CONSTANCY_SIGMAS: f64 = 5.0;

/// Statistics of the light-free baseline used to zero the voltage scale and
/// to remove the baseline variance from `μ₂(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DarkReference {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

impl DarkReference {
    /// Known baseline of a simulated chain whose voltages were multiplied
    /// by `gain_scale`.
    pub fn known(dark: &DarkNoiseModel, gain_scale: f64) -> Self {
        Self {
            mean: gain_scale * dark.offset_raw,
            mean_se: 0.0,
            variance: gain_scale * gain_scale * dark.variance(),
            variance_se: 0.0,
        }
    }

    /// Baseline measured from a separate light-free recording.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let (full, parts) = blocks(samples)?;
        let mean = jackknife_from_blocks(&full, &parts, PowerSums::mean);
        let var = jackknife_from_blocks(&full, &parts, |ps| ps.central(2));
        Ok(Self {
            mean: mean.value,
            mean_se: mean.se,
            variance: var.value,
            variance_se: var.se,
        })
    }
}

fn blocks(samples: &[f64]) -> Result<(PowerSums, Vec<PowerSums>)> {
    if samples.len() < 2 * JACKKNIFE_BLOCKS {
        return Err(Error::InsufficientData {
            needed: 2 * JACKKNIFE_BLOCKS,
            got: samples.len(),
        });
    }
    let shift = samples.iter().copied().sum::<NeumaierSum>().value() / samples.len() as f64;
    let parts = block_power_sums(samples, shift, 2, JACKKNIFE_BLOCKS);
    let full = parts.iter().fold(PowerSums::new(shift, 2), |acc, p| acc.merged(p));
    Ok((full, parts))
}

/// One point of the sweep, on the zeroed voltage scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaSeriesPoint {
    pub eta: f64,
    pub mean_v: f64,
    /// `(μ₂(v) − σ₀²)/⟨v⟩`.
    pub fano_v: f64,
    pub se_mean_v: f64,
    pub se_fano_v: f64,
    pub n_samples: usize,
}

impl EtaSeriesPoint {
    /// Reduces a raw ensemble against a baseline reference.
    pub fn from_ensemble(ensemble: &VoltageEnsemble, dark: &DarkReference) -> Result<Self> {
        let (full, parts) = blocks(&ensemble.samples)?;
        let mean = jackknife_from_blocks(&full, &parts, |ps| ps.mean() - dark.mean);
        if mean.value.is_nan() || mean.value <= 0.0 {
            return Err(Error::UndefinedStatistic("μ₂(v)/⟨v⟩ needs ⟨v⟩ > 0 after zeroing"));
        }
        let fano = jackknife_from_blocks(&full, &parts, |ps| {
            (ps.central(2) - dark.variance) / (ps.mean() - dark.mean)
        });
        let m = mean.value;
        Ok(Self {
            eta: ensemble.eta,
            mean_v: m,
            fano_v: fano.value,
            se_mean_v: mean.se.hypot(dark.mean_se),
            se_fano_v: fano
                .se
                .hypot(dark.variance_se / m)
                .hypot(fano.value * dark.mean_se / m),
            n_samples: ensemble.n_samples(),
        })
    }
}

/// `count` equally spaced efficiencies from `0.05·eta_max` to `eta_max`.
pub fn default_eta_series(eta_max: f64, count: usize) -> Vec<f64> {
    let lo = 0.05 * eta_max;
    match count {
        0 => Vec::new(),
        1 => vec![eta_max],
        _ => (0..count)
            .map(|i| {
                let t = i as f64 / (count - 1) as f64;
                lo * (1.0 - t) + eta_max * t
            })
            .collect(),
    }
}

fn check_design(eta_list: &[f64], n_samples: usize) -> Result<()> {
    if let Some(bad) = eta_list.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        return Err(Error::invalid("eta", format!("sweep values must lie in (0, 1], got {bad}")));
    }
    let mut distinct = eta_list.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InsufficientDesign(format!(
            "need at least 3 distinct efficiencies, got {}",
            distinct.len()
        )));
    }
    if n_samples < MIN_SERIES_SAMPLES {
        return Err(Error::InsufficientDesign(format!(
            "need at least {MIN_SERIES_SAMPLES} samples per efficiency, got {n_samples}"
        )));
    }
    Ok(())
}

/// Seed of the ensemble at position `index` of a sweep rooted at `seed`.
pub fn eta_seed(seed: u64, index: usize) -> u64 {
    derive_seed(derive_seed(seed, labels::ETA_SERIES), index as u64)
}

/// Simulates the raw ensembles of a sweep, one independent seed per `η`.
pub fn simulate_eta_series(
    source: &PhotonNumberDistribution,
    gain: &GainModel,
    dark: &DarkNoiseModel,
    eta_list: &[f64],
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<VoltageEnsemble>> {
    check_design(eta_list, n_samples)?;
    eta_list
        .iter()
        .enumerate()
        .map(|(i, &eta)| simulate_ensemble(source, eta, gain, dark, n_samples, eta_seed(seed, i), workers))
        .collect()
}

/// Simulates a sweep and reduces it with the known baseline.
#[allow(clippy::too_many_arguments)]
pub fn run_eta_series(
    source: &PhotonNumberDistribution,
    gain: &GainModel,
    dark: &DarkNoiseModel,
    eta_list: &[f64],
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<EtaSeriesPoint>> {
    let reference = DarkReference::known(dark, 1.0);
    simulate_eta_series(source, gain, dark, eta_list, n_samples, seed, workers)?
        .iter()
        .map(|e| EtaSeriesPoint::from_ensemble(e, &reference))
        .collect()
}

/// Weighted straight-line fit of `fano_v` against `mean_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    /// Estimate of `Q/⟨n⟩`.
    pub slope: f64,
    /// Estimate of `γ̄(1 + σ²/γ̄²)` in volts.
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub slope_intercept_cov: f64,
    /// Working conversion factor, equal to the intercept.
    pub gamma_bar_est: f64,
    pub r_squared: f64,
    pub chi2: f64,
    pub dof: usize,
    /// False when the intercept is not positive.
    pub valid: bool,
    /// `γ̄` solving `γ̄ + σ²/γ̄ = intercept` when `σ` is known.
    pub gamma_bar_sigma_corrected: Option<f64>,
    pub points: Vec<EtaSeriesPoint>,
}

impl CalibrationFit {
    /// Fills in the σ-corrected conversion factor for a known gain spread.
    pub fn with_known_sigma(mut self, sigma: f64) -> Self {
        let disc = self.intercept * self.intercept - 4.0 * sigma * sigma;
        self.gamma_bar_sigma_corrected = (self.valid && disc >= 0.0).then(|| 0.5 * (self.intercept + disc.sqrt()));
        self
    }

    /// `χ²/dof`; close to one when the point errors are realistic.
    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof as f64
    }
}

pub fn fit_fano_line(points: &[EtaSeriesPoint]) -> Result<CalibrationFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientDesign(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points
        .iter()
        .find(|p| !(p.se_fano_v > 0.0 && p.se_fano_v.is_finite() && p.mean_v.is_finite() && p.fano_v.is_finite()))
    {
        return Err(Error::invalid(
            "points",
            format!("point at eta={} needs finite values and a positive standard error", p.eta),
        ));
    }
    let w: Vec<f64> = points.iter().map(|p| 1.0 / (p.se_fano_v * p.se_fano_v)).collect();
    let sum = |f: &dyn Fn(usize) -> f64| (0..points.len()).map(f).sum::<NeumaierSum>().value();
    let s = sum(&|i| w[i]);
    let x_bar = sum(&|i| w[i] * points[i].mean_v) / s;
    let y_bar = sum(&|i| w[i] * points[i].fano_v) / s;
    let sxx = sum(&|i| w[i] * (points[i].mean_v - x_bar).powi(2));
    let sxy = sum(&|i| w[i] * (points[i].mean_v - x_bar) * (points[i].fano_v - y_bar));
    let syy = sum(&|i| w[i] * (points[i].fano_v - y_bar).powi(2));
    let spread = points
        .iter()
        .map(|p| (p.mean_v - x_bar).abs())
        .fold(0.0, f64::max);
    if sxx.is_nan() || sxx <= 0.0 || spread <= 1e-12 * x_bar.abs() {
        return Err(Error::SingularFit("all points share the same ⟨v⟩"));
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let chi2 = sum(&|i| w[i] * (points[i].fano_v - intercept - slope * points[i].mean_v).powi(2));
    Ok(CalibrationFit {
        slope,
        intercept,
        slope_se: (1.0 / sxx).sqrt(),
        intercept_se: (1.0 / s + x_bar * x_bar / sxx).sqrt(),
        slope_intercept_cov: -x_bar / sxx,
        gamma_bar_est: intercept,
        r_squared: if syy > 0.0 { 1.0 - chi2 / syy } else { 1.0 },
        chi2,
        dof: points.len() - 2,
        valid: intercept > 0.0,
        gamma_bar_sigma_corrected: None,
        points: points.to_vec(),
    })
}

/// Intercept ratio for one known gain factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainScalingEntry {
    pub factor: f64,
    pub intercept: f64,
    pub intercept_se: f64,
    /// `intercept(g)/intercept(1)`.
    pub ratio: f64,
    pub ratio_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainScalingReport {
    pub baseline_intercept: f64,
    pub baseline_intercept_se: f64,
    pub sigmas: f64,
    pub entries: Vec<GainScalingEntry>,
    pub fits: Vec<CalibrationFit>,
    pub pass: bool,
}

impl GainScalingReport {
    /// Compares already fitted sweeps against the unscaled one.
    pub fn from_fits(baseline: &CalibrationFit, scaled: &[(f64, CalibrationFit)]) -> Self {
        let (i1, s1) = (baseline.intercept, baseline.intercept_se);
        let entries: Vec<GainScalingEntry> = scaled
            .iter()
            .map(|(g, fit)| {
                let ratio = fit.intercept / i1;
                let ratio_se = if fit == baseline {
                    0.0
                } else {
                    ratio.abs() * (fit.intercept_se / fit.intercept).hypot(s1 / i1)
                };
                let diff = (ratio - g).abs();
                GainScalingEntry {
                    factor: *g,
                    intercept: fit.intercept,
                    intercept_se: fit.intercept_se,
                    ratio,
                    ratio_se,
                    pass: baseline.valid && fit.valid && diff <= GAIN_SCALING_SIGMAS * ratio_se + 1e-12 * g,
                }
            })
            .collect();
        Self {
            baseline_intercept: i1,
            baseline_intercept_se: s1,
            sigmas: GAIN_SCALING_SIGMAS,
            pass: entries.iter().all(|e| e.pass),
            entries,
            fits: scaled.iter().map(|(_, f)| f.clone()).collect(),
        }
    }
}

/// Repeats the sweep with every voltage multiplied by each known factor `g`
/// (amplifier gain or ADC scale) and checks that the intercept scales by
/// `g`. The factor-one sweep uses the same seed as [`run_eta_series`], so a
/// factor of exactly one reproduces the baseline and gives ratio one.
#[allow(clippy::too_many_arguments)]
pub fn gain_scaling_check(
    source: &PhotonNumberDistribution,
    gain: &GainModel,
    dark: &DarkNoiseModel,
    eta_list: &[f64],
    factors: &[f64],
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<GainScalingReport> {
    let baseline = fit_fano_line(&run_eta_series(source, gain, dark, eta_list, n_samples, seed, workers)?)?;
    gain_scaling_with_baseline(&baseline, source, gain, dark, eta_list, factors, n_samples, seed, workers)
}

/// As [`gain_scaling_check`] with the unscaled fit supplied by the caller.
#[allow(clippy::too_many_arguments)]
pub fn gain_scaling_with_baseline(
    baseline: &CalibrationFit,
    source: &PhotonNumberDistribution,
    gain: &GainModel,
    dark: &DarkNoiseModel,
    eta_list: &[f64],
    factors: &[f64],
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<GainScalingReport> {
    let mut scaled = Vec::with_capacity(factors.len());
    for (i, &g) in factors.iter().enumerate() {
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::invalid("gain_scale", format!("factors must be finite and > 0, got {g}")));
        }
        if g == 1.0 {
            scaled.push((g, baseline.clone()));
            continue;
        }
        let sub_seed = derive_seed(derive_seed(seed, labels::GAIN_SCALE), i as u64);
        let reference = DarkReference::known(dark, g);
        let points = simulate_eta_series(source, gain, dark, eta_list, n_samples, sub_seed, workers)?
            .into_iter()
            .map(|e| EtaSeriesPoint::from_ensemble(&e.scaled(g), &reference))
            .collect::<Result<Vec<_>>>()?;
        scaled.push((g, fit_fano_line(&points)?));
    }
    Ok(GainScalingReport::from_fits(baseline, &scaled))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanConstancyEntry {
    pub eta: f64,
    /// `⟨v⟩ / ⟨m⟩_ref`, a σ-free estimate of `γ̄`.
    pub ratio: f64,
    pub ratio_se: f64,
    /// Deviation from the weighted mean ratio in units of `ratio_se`.
    pub z_constancy: f64,
    /// Deviation from the fitted `γ̄` in combined standard errors.
    pub z_fit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanConstancyReport {
    /// Weighted mean of the per-point ratios.
    pub gamma_bar_mean: f64,
    pub gamma_bar_mean_se: f64,
    pub gamma_bar_est: f64,
    pub gamma_bar_est_se: f64,
    pub sigmas: f64,
    pub entries: Vec<MeanConstancyEntry>,
    pub pass: bool,
}

/// Checks that `⟨v⟩/⟨m⟩` is the same at every efficiency and agrees with
/// the fitted conversion factor. `reference_mean_m[i]` is the expected
/// `⟨m⟩ = η⟨n⟩` of point `i`.
pub fn mean_constancy_check(
    points: &[EtaSeriesPoint],
    gamma_bar_est: f64,
    gamma_bar_est_se: f64,
    reference_mean_m: &[f64],
) -> Result<MeanConstancyReport> {
    if points.len() != reference_mean_m.len() {
        return Err(Error::invalid(
            "reference_mean_m",
            format!("expected {} entries, got {}", points.len(), reference_mean_m.len()),
        ));
    }
    if points.is_empty() {
        return Err(Error::InsufficientDesign("no points to check".into()));
    }
    if let Some(bad) = reference_mean_m.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::invalid("reference_mean_m", format!("entries must be > 0, got {bad}")));
    }
    let ratios: Vec<(f64, f64)> = points
        .iter()
        .zip(reference_mean_m)
        .map(|(p, &m)| (p.mean_v / m, p.se_mean_v / m))
        .collect();
    let (mean, mean_se) = if ratios.iter().all(|r| r.1 > 0.0) {
        let w_sum = ratios.iter().map(|r| r.1.powi(-2)).sum::<NeumaierSum>().value();
        let mean = ratios.iter().map(|r| r.0 * r.1.powi(-2)).sum::<NeumaierSum>().value() / w_sum;
        (mean, w_sum.sqrt().recip())
    } else {
        (ratios.iter().map(|r| r.0).sum::<f64>() / ratios.len() as f64, 0.0)
    };
    let z = |d: f64, se: f64| {
        if se > 0.0 {
            d / se
        } else if d.abs() <= 1e-12 * mean.abs() {
            0.0
        } else {
            f64::INFINITY.copysign(d)
        }
    };
    let entries: Vec<MeanConstancyEntry> = points
        .iter()
        .zip(&ratios)
        .map(|(p, &(ratio, ratio_se))| {
            let z_constancy = z(ratio - mean, ratio_se);
            let z_fit = z(ratio - gamma_bar_est, ratio_se.hypot(gamma_bar_est_se));
            MeanConstancyEntry {
                eta: p.eta,
                ratio,
                ratio_se,
                z_constancy,
                z_fit,
                pass: z_constancy.abs() <= MEAN_CONSTANCY_SIGMAS && z_fit.abs() <= MEAN_CONSTANCY_SIGMAS,
            }
        })
        .collect();
    Ok(MeanConstancyReport {
        gamma_bar_mean: mean,
        gamma_bar_mean_se: mean_se,
        gamma_bar_est,
        gamma_bar_est_se,
        sigmas: MEAN_CONSTANCY_SIGMAS,
        pass: entries.iter().all(|e| e.pass),
        entries,
    })
}
