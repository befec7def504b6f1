//! End-to-end experiments: simulate, analyse, write artifacts.
//!
//! Output layout of [`run_experiment`]:
//!
//! ```text
//! config.json          the configuration, without output_dir
//! dark.csv             light-free recording
//! ensembles/eta_NN.csv one raw ensemble per sweep efficiency
//! reconstruct.csv      raw ensemble used for the P_m reconstruction
//! moments.json         sample vs exact voltage moments per efficiency
//! calibration.json     sweep points, line fit and consistency checks
//! pm.csv               reconstructed P_m (m, pmf_hat, count)
//! pm_metrics.json      reconstruction quality and self-consistency
//! report.md            human-readable summary with every verdict
//! ```
//!
//! Every file carries the configuration hash. Identical configurations
//! (including seed and worker count) produce byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{
    fit_fano_line, gain_scaling_with_baseline, mean_constancy_check, simulate_eta_series, CalibrationFit,
    DarkReference, EtaSeriesPoint, GainScalingReport, MeanConstancyReport, JACKKNIFE_BLOCKS,
};
use crate::channel::apply_bernoulli;
use crate::config::{Models, RunConfig};
use crate::detector::{simulate_dark, simulate_ensemble, VoltageEnsemble};
use crate::error::{Error, Result};
use crate::io;
use crate::moments::{
    analytic_voltage_moments, block_power_sums, jackknife_from_blocks, narrow_gain_moments, sample_moments,
    MomentSet, PowerSums,
};
use crate::reconstruction::{
    compare, rebin, self_consistency_check, subtract_offset, ComparisonMetrics, GammaBarEstimate,
    ReconstructionResult, SelfConsistencyReport,
};
use crate::rng::{derive_seed, labels};
use statrs::function::erf::erfc;

/// Coverage factor when comparing against simulation ground truth.
pub const TRUTH_SIGMAS: f64 = 3.0;

/// Coverage factor for Monte Carlo moments against the exact engine.
pub const MOMENT_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Ground-truth line parameters of a simulated sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedLine {
    pub gamma_bar: f64,
    pub sigma: f64,
    /// `γ̄(1 + σ²/γ̄²)`.
    pub intercept: f64,
    /// `Q/⟨n⟩`.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDoc {
    pub config_hash: Option<String>,
    pub mode: String,
    pub skipped: Option<String>,
    pub dark: DarkReference,
    pub fit: Option<CalibrationFit>,
    pub expected: Option<ExpectedLine>,
    pub gain_scaling: Option<GainScalingReport>,
    pub mean_constancy: Option<MeanConstancyReport>,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentStandardErrors {
    pub mean: f64,
    /// Standard errors of `μ_r`, r = 2..=order.
    pub central: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsEntry {
    pub eta: f64,
    pub n_samples: usize,
    pub sample: MomentSet,
    pub sample_se: MomentStandardErrors,
    pub exact: Option<MomentSet>,
    pub narrow_gain: Option<MomentSet>,
    /// `(sample − exact)/se` for the mean and `μ_r`, r = 2..=order.
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsDoc {
    pub config_hash: Option<String>,
    pub order: usize,
    pub series: Vec<MomentsEntry>,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmMetricsDoc {
    pub config_hash: Option<String>,
    pub eta: Option<f64>,
    pub gamma_bar_used: f64,
    pub gamma_bar_source: String,
    pub dark_mean_subtracted: f64,
    pub n_samples: u64,
    pub underflow_fraction: f64,
    pub mean_m_hat: f64,
    pub comparison: Option<ComparisonMetrics>,
    pub self_consistency: Option<SelfConsistencyReport>,
    pub verdicts: Vec<Verdict>,
}

/// Raw recordings of one experiment.
#[derive(Debug, Clone)]
pub struct Recordings {
    pub dark: VoltageEnsemble,
    pub series: Vec<VoltageEnsemble>,
    pub reconstruct: VoltageEnsemble,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub config_hash: String,
    pub verdicts: Vec<Verdict>,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

pub fn ensemble_path(out: &Path, index: usize) -> PathBuf {
    out.join("ensembles").join(format!("eta_{index:02}.csv"))
}

/// Draws every recording of the experiment.
pub fn simulate(config: &RunConfig, models: &Models) -> Result<Recordings> {
    let dark = simulate_dark(
        &models.dark,
        config.dark_samples(),
        derive_seed(config.seed, labels::DARK),
        config.workers,
    )?;
    let series = simulate_eta_series(
        &models.source,
        &models.gain,
        &models.dark,
        &models.eta_series,
        config.n_samples,
        config.seed,
        config.workers,
    )?;
    let reconstruct = simulate_ensemble(
        &models.source,
        models.reconstruct_eta,
        &models.gain,
        &models.dark,
        config.reconstruct_samples(),
        derive_seed(config.seed, labels::RECONSTRUCTION),
        config.workers,
    )?;
    Ok(Recordings {
        dark,
        series,
        reconstruct,
    })
}

fn write_recordings(out: &Path, rec: &Recordings, hash: &str) -> Result<()> {
    io::write_ensemble(&out.join("dark.csv"), &rec.dark, Some(hash))?;
    for (i, e) in rec.series.iter().enumerate() {
        io::write_ensemble(&ensemble_path(out, i), e, Some(hash))?;
    }
    io::write_ensemble(&out.join("reconstruct.csv"), &rec.reconstruct, Some(hash))
}

fn write_config(out: &Path, config: &RunConfig) -> Result<()> {
    let mut canonical = config.clone();
    canonical.output_dir = None;
    io::write_text(&out.join("config.json"), &canonical.to_json()?)
}

/// Writes the configuration and raw recordings only.
pub fn simulate_to_dir(config: &RunConfig, out: &Path) -> Result<String> {
    let models = config.validate()?;
    let hash = config.hash();
    let rec = simulate(config, &models)?;
    write_config(out, config)?;
    write_recordings(out, &rec, &hash)?;
    Ok(hash)
}

/// Sample moments through `order` with block-jackknife standard errors.
pub fn moments_with_errors(samples: &[f64], order: usize) -> Result<(MomentSet, MomentStandardErrors)> {
    let m = sample_moments(samples, order)?;
    if samples.len() < 2 * JACKKNIFE_BLOCKS {
        return Err(Error::InsufficientData {
            needed: 2 * JACKKNIFE_BLOCKS,
            got: samples.len(),
        });
    }
    let parts = block_power_sums(samples, m.mean(), order, JACKKNIFE_BLOCKS);
    let full = parts.iter().fold(PowerSums::new(m.mean(), order), |acc, p| acc.merged(p));
    let mean = jackknife_from_blocks(&full, &parts, PowerSums::mean).se;
    let central = (2..=order)
        .map(|r| jackknife_from_blocks(&full, &parts, |ps| ps.central(r)).se)
        .collect();
    Ok((m, MomentStandardErrors { mean, central }))
}

/// `d/se`, with a zero-width error treated as exact agreement when `d` is
/// at rounding level relative to `scale`.
fn z_score(d: f64, se: f64, scale: f64) -> f64 {
    if se > 0.0 {
        d / se
    } else if d.abs() <= 1e-9 * scale.max(1.0) {
        0.0
    } else {
        f64::INFINITY
    }
}

fn moments_doc(config: &RunConfig, models: &Models, rec: &Recordings, hash: &str) -> Result<MomentsDoc> {
    let order = config.moment_order;
    let mut series = Vec::with_capacity(rec.series.len());
    let mut worst: f64 = 0.0;
    for e in &rec.series {
        let zeroed = subtract_offset(e.clone(), models.dark.offset_raw)?;
        let (sample, se) = moments_with_errors(&zeroed.samples, order)?;
        let detected = apply_bernoulli(&models.source, e.eta)?;
        let exact = analytic_voltage_moments(&detected, &models.gain, &models.dark, order)?;
        let narrow = narrow_gain_moments(&detected, models.gain.gamma_bar(), order)?;
        let scale = exact.central(2).abs().sqrt().max(exact.mean().abs());
        let mut z = vec![z_score(sample.mean() - exact.mean(), se.mean, scale)];
        for r in 2..=order {
            let d = sample.central(r) - exact.central(r);
            z.push(z_score(d, se.central[r - 2], scale.powi(r as i32)));
        }
        for x in &z {
            worst = worst.max(x.abs());
        }
        series.push(MomentsEntry {
            eta: e.eta,
            n_samples: e.n_samples(),
            sample,
            sample_se: se,
            exact: Some(exact),
            narrow_gain: Some(narrow),
            z,
        });
    }
    let verdicts = vec![Verdict::new(
        "moments_match_exact",
        worst <= MOMENT_SIGMAS,
        format!("largest |z| over all efficiencies and orders ≤ {order}: {worst:.3} (limit {MOMENT_SIGMAS})"),
    )];
    Ok(MomentsDoc {
        config_hash: Some(hash.to_string()),
        order,
        series,
        verdicts,
    })
}

fn calibration_doc(
    config: &RunConfig,
    models: &Models,
    rec: &Recordings,
    hash: &str,
) -> Result<CalibrationDoc> {
    let measured_dark = DarkReference::from_samples(&rec.dark.samples)?;
    let mut doc = CalibrationDoc {
        config_hash: Some(hash.to_string()),
        mode: "simulation".into(),
        skipped: None,
        dark: measured_dark,
        fit: None,
        expected: None,
        gain_scaling: None,
        mean_constancy: None,
        verdicts: Vec::new(),
    };
    let mean_n = models.source.mean();
    if mean_n <= 0.0 {
        doc.skipped = Some("no light: ⟨v⟩ = 0, so μ₂(v)/⟨v⟩ is undefined".into());
        return Ok(doc);
    }
    let reference = DarkReference::known(&models.dark, 1.0);
    let points = rec
        .series
        .iter()
        .map(|e| EtaSeriesPoint::from_ensemble(e, &reference))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_fano_line(&points)?.with_known_sigma(models.gain.sigma());
    let (g, s) = (models.gain.gamma_bar(), models.gain.sigma());
    let expected = ExpectedLine {
        gamma_bar: g,
        sigma: s,
        intercept: g + s * s / g,
        slope: models.source.mandel_q().unwrap_or(0.0) / mean_n,
    };
    doc.verdicts.push(Verdict::new(
        "fit_valid",
        fit.valid,
        format!("intercept {:.6} > 0", fit.intercept),
    ));
    let z_i = (fit.intercept - expected.intercept) / fit.intercept_se;
    doc.verdicts.push(Verdict::new(
        "intercept_matches_truth",
        z_i.abs() <= TRUTH_SIGMAS,
        format!(
            "intercept {:.6} ± {:.6} vs γ̄(1+σ²/γ̄²) = {:.6} (z = {z_i:.3})",
            fit.intercept, fit.intercept_se, expected.intercept
        ),
    ));
    let z_s = (fit.slope - expected.slope) / fit.slope_se;
    doc.verdicts.push(Verdict::new(
        "slope_matches_truth",
        z_s.abs() <= TRUTH_SIGMAS,
        format!(
            "slope {:.6e} ± {:.6e} vs Q/⟨n⟩ = {:.6e} (z = {z_s:.3})",
            fit.slope, fit.slope_se, expected.slope
        ),
    ));
    if !config.gain_scale.is_empty() {
        let report = gain_scaling_with_baseline(
            &fit,
            &models.source,
            &models.gain,
            &models.dark,
            &models.eta_series,
            &config.gain_scale,
            config.n_samples,
            config.seed,
            config.workers,
        )?;
        let detail = report
            .entries
            .iter()
            .map(|e| format!("g={}: ratio {:.5} ± {:.5}", e.factor, e.ratio, e.ratio_se))
            .collect::<Vec<_>>()
            .join("; ");
        doc.verdicts.push(Verdict::new("gain_scaling", report.pass, detail));
        doc.gain_scaling = Some(report);
    }
    let refs: Vec<f64> = points.iter().map(|p| p.eta * mean_n).collect();
    let mc = mean_constancy_check(&points, fit.gamma_bar_est, fit.intercept_se, &refs)?;
    doc.verdicts.push(Verdict::new(
        "mean_constancy",
        mc.pass,
        format!(
            "⟨v⟩/⟨m⟩ = {:.5} ± {:.5}; worst |z| constancy {:.3}, vs fit {:.3}",
            mc.gamma_bar_mean,
            mc.gamma_bar_mean_se,
            mc.entries.iter().map(|e| e.z_constancy.abs()).fold(0.0, f64::max),
            mc.entries.iter().map(|e| e.z_fit.abs()).fold(0.0, f64::max),
        ),
    ));
    doc.mean_constancy = Some(mc);
    doc.expected = Some(expected);
    doc.fit = Some(fit);
    Ok(doc)
}

/// Conversion factor for the rebinning and where it came from.
fn choose_gamma_bar(config: &RunConfig, models: &Models, cal: &CalibrationDoc) -> (f64, f64, &'static str) {
    if let Some(g) = config.gamma_bar_override {
        return (g, 0.0, "override");
    }
    match &cal.fit {
        Some(fit) if fit.valid => (fit.gamma_bar_est, fit.intercept_se, "calibration"),
        _ => (models.gain.gamma_bar(), 0.0, "configured"),
    }
}

fn reconstruction_doc(
    config: &RunConfig,
    models: &Models,
    rec: &Recordings,
    cal: &CalibrationDoc,
    hash: &str,
) -> Result<(ReconstructionResult, PmMetricsDoc)> {
    let (gamma_bar, gamma_bar_se, source) = choose_gamma_bar(config, models, cal);
    let offset = models.dark.offset_raw;
    let zeroed = subtract_offset(rec.reconstruct.clone(), offset)?;
    let truth = apply_bernoulli(&models.source, models.reconstruct_eta)?;
    let result = rebin(&zeroed, gamma_bar)?.with_reference(&truth);
    let metrics = compare(&result, &truth);
    let mut verdicts = Vec::new();
    let consistency = if models.source.mean() > 0.0 && zeroed.n_samples() >= 2 {
        let m = sample_moments(&zeroed.samples, 2)?;
        let mean_se = (m.central(2) / zeroed.n_samples() as f64).sqrt();
        let reference = match &cal.mean_constancy {
            Some(mc) => GammaBarEstimate {
                value: mc.gamma_bar_mean,
                se: mc.gamma_bar_mean_se,
            },
            None => GammaBarEstimate {
                value: models.gain.gamma_bar(),
                se: 0.0,
            },
        };
        let report = self_consistency_check(&result, m.mean(), mean_se, reference, gamma_bar_se)?;
        verdicts.push(Verdict::new(
            "self_consistency",
            report.pass,
            format!(
                "⟨m̂⟩ = {:.5} vs ⟨v⟩/γ̄ = {:.5} (|Δ| = {:.5}, tolerance {:.5})",
                report.mean_m_hat,
                report.expected_mean_m,
                report.difference.abs(),
                report.tolerance
            ),
        ));
        Some(report)
    } else {
        // without light only baseline excursions beyond γ̄/2 leave bin 0
        let leak = if models.dark.sigma0 > 0.0 {
            0.5 * erfc(gamma_bar / (2.0 * std::f64::consts::SQRT_2 * models.dark.sigma0))
        } else {
            0.0
        };
        let expected = leak * result.n_samples as f64;
        let outside = result.n_samples - result.counts[0];
        verdicts.push(Verdict::new(
            "vacuum_reconstruction",
            (outside as f64) <= expected + 5.0 * expected.sqrt() + 1.0,
            format!(
                "P̂(0) = {}; {outside} shots outside bin 0, {expected:.3} expected from baseline noise",
                result.prob(0)
            ),
        ));
        None
    };
    let doc = PmMetricsDoc {
        config_hash: Some(hash.to_string()),
        eta: Some(models.reconstruct_eta),
        gamma_bar_used: gamma_bar,
        gamma_bar_source: source.into(),
        dark_mean_subtracted: offset,
        n_samples: result.n_samples,
        underflow_fraction: result.underflow_fraction,
        mean_m_hat: result.mean_m_hat,
        comparison: Some(metrics),
        self_consistency: consistency,
        verdicts,
    };
    Ok((result, doc))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}

fn report_markdown(
    config: &RunConfig,
    models: &Models,
    hash: &str,
    moments: &MomentsDoc,
    cal: &CalibrationDoc,
    pm: &PmMetricsDoc,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Experiment report\n");
    let _ = writeln!(s, "- config hash: `{hash}`");
    let _ = writeln!(s, "- source: {}", models.source.label());
    let _ = writeln!(
        s,
        "- gain: {:?}, γ̄ = {}, σ = {}",
        models.gain.family(),
        models.gain.gamma_bar(),
        models.gain.sigma()
    );
    let _ = writeln!(s, "- dark: σ₀ = {}, raw offset = {}", models.dark.sigma0, models.dark.offset_raw);
    let _ = writeln!(s, "- seed: {}, workers: {}", config.seed, config.workers);
    let _ = writeln!(s, "- shots per efficiency: {}\n", config.n_samples);

    let _ = writeln!(s, "## Dark recording\n");
    let _ = writeln!(
        s,
        "mean {:.6} ± {:.6}, variance {:.6} ± {:.6}\n",
        cal.dark.mean, cal.dark.mean_se, cal.dark.variance, cal.dark.variance_se
    );

    let _ = writeln!(s, "## Calibration\n");
    if let Some(reason) = &cal.skipped {
        let _ = writeln!(s, "Skipped: {reason}\n");
    }
    if let Some(fit) = &cal.fit {
        let _ = writeln!(s, "| η | ⟨v⟩ | μ₂(v)/⟨v⟩ | SE |");
        let _ = writeln!(s, "|---|---|---|---|");
        for p in &fit.points {
            let _ = writeln!(s, "| {} | {:.4} | {:.4} | {:.4} |", p.eta, p.mean_v, p.fano_v, p.se_fano_v);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "- slope: {:.6e} ± {:.6e}", fit.slope, fit.slope_se);
        let _ = writeln!(s, "- intercept: {:.6} ± {:.6}", fit.intercept, fit.intercept_se);
        let _ = writeln!(s, "- σ-corrected γ̄: {}", fmt_opt(fit.gamma_bar_sigma_corrected));
        let _ = writeln!(s, "- χ²/dof: {:.4}, r²: {:.6}", fit.reduced_chi2(), fit.r_squared);
        if let Some(e) = &cal.expected {
            let _ = writeln!(
                s,
                "- expected: intercept {:.6}, slope {:.6e}",
                e.intercept, e.slope
            );
        }
        let _ = writeln!(s);
    }
    if let Some(gs) = &cal.gain_scaling {
        let _ = writeln!(s, "| g | intercept | ratio | SE | pass |");
        let _ = writeln!(s, "|---|---|---|---|---|");
        for e in &gs.entries {
            let _ = writeln!(
                s,
                "| {} | {:.4} | {:.5} | {:.5} | {} |",
                e.factor, e.intercept, e.ratio, e.ratio_se, e.pass
            );
        }
        let _ = writeln!(s);
    }
    if let Some(mc) = &cal.mean_constancy {
        let _ = writeln!(s, "| η | ⟨v⟩/⟨m⟩ | SE | z (constancy) | z (fit) | pass |");
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        for e in &mc.entries {
            let _ = writeln!(
                s,
                "| {} | {:.5} | {:.5} | {:.3} | {:.3} | {} |",
                e.eta, e.ratio, e.ratio_se, e.z_constancy, e.z_fit, e.pass
            );
        }
        let _ = writeln!(s);
    }

    let _ = writeln!(s, "## Moments\n");
    let _ = writeln!(s, "| η | ⟨v⟩ | μ₂(v) | z per order |");
    let _ = writeln!(s, "|---|---|---|---|");
    for e in &moments.series {
        let z = e.z.iter().map(|z| format!("{z:.2}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "| {} | {:.4} | {:.4} | {z} |", e.eta, e.sample.mean(), e.sample.central(2));
    }
    let _ = writeln!(s);

    let _ = writeln!(s, "## Reconstruction\n");
    let _ = writeln!(s, "- η: {}", fmt_opt(pm.eta));
    let _ = writeln!(s, "- γ̄ used: {:.6} ({})", pm.gamma_bar_used, pm.gamma_bar_source);
    let _ = writeln!(s, "- shots: {}", pm.n_samples);
    let _ = writeln!(s, "- ⟨m̂⟩: {:.6}", pm.mean_m_hat);
    let _ = writeln!(s, "- underflow fraction: {:.3e}", pm.underflow_fraction);
    if let Some(c) = &pm.comparison {
        let _ = writeln!(s, "- TV distance: {:.6}", c.tv_distance);
        let _ = writeln!(s, "- fidelity: {:.8}", c.fidelity);
        let _ = writeln!(s, "- max |z|: {:.3}", c.max_abs_z);
    }
    let _ = writeln!(s);

    let _ = writeln!(s, "## Verdicts\n");
    let _ = writeln!(s, "| check | result | detail |");
    let _ = writeln!(s, "|---|---|---|");
    for v in cal.verdicts.iter().chain(&moments.verdicts).chain(&pm.verdicts) {
        let _ = writeln!(s, "| {} | {} | {} |", v.name, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    s
}

/// Runs the whole pipeline and writes every artifact into `out`.
pub fn run_experiment(config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let models = config.validate()?;
    let hash = config.hash();
    let rec = simulate(config, &models)?;
    write_config(out, config)?;
    write_recordings(out, &rec, &hash)?;

    let moments = moments_doc(config, &models, &rec, &hash)?;
    let cal = calibration_doc(config, &models, &rec, &hash)?;
    let (result, pm) = reconstruction_doc(config, &models, &rec, &cal, &hash)?;

    io::write_json(&out.join("moments.json"), &moments)?;
    io::write_json(&out.join("calibration.json"), &cal)?;
    io::write_text(&out.join("pm.csv"), &io::pm_to_string(&result, Some(&hash)))?;
    io::write_json(&out.join("pm_metrics.json"), &pm)?;
    io::write_text(
        &out.join("report.md"),
        &report_markdown(config, &models, &hash, &moments, &cal, &pm),
    )?;

    let verdicts = cal
        .verdicts
        .iter()
        .chain(&moments.verdicts)
        .chain(&pm.verdicts)
        .cloned()
        .collect();
    Ok(RunOutcome {
        out_dir: out.to_path_buf(),
        config_hash: hash,
        verdicts,
    })
}

/// Calibration from recorded files: per-efficiency ensembles and a dark
/// recording. `⟨n⟩` is unknown, so mean constancy is tested against the
/// best common `⟨v⟩/η`.
pub fn calibrate_recordings(series: &[VoltageEnsemble], dark: &VoltageEnsemble) -> Result<CalibrationDoc> {
    let reference = DarkReference::from_samples(&dark.samples)?;
    if let Some(e) = series.iter().find(|e| !(e.eta > 0.0 && e.eta <= 1.0)) {
        return Err(Error::invalid("eta", format!("ensemble header eta must lie in (0, 1], got {}", e.eta)));
    }
    let points = series
        .iter()
        .map(|e| EtaSeriesPoint::from_ensemble(e, &reference))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_fano_line(&points)?;
    let mut verdicts = vec![Verdict::new(
        "fit_valid",
        fit.valid,
        format!("intercept {:.6} > 0", fit.intercept),
    )];
    let mut mean_constancy = None;
    if fit.valid {
        let w: Vec<f64> = points.iter().map(|p| (p.eta / p.se_mean_v).powi(2)).collect();
        let v_per_eta = points.iter().zip(&w).map(|(p, w)| w * p.mean_v / p.eta).sum::<f64>() / w.iter().sum::<f64>();
        let mean_n = v_per_eta / fit.gamma_bar_est;
        let refs: Vec<f64> = points.iter().map(|p| p.eta * mean_n).collect();
        let mc = mean_constancy_check(&points, fit.gamma_bar_est, fit.intercept_se, &refs)?;
        verdicts.push(Verdict::new(
            "mean_constancy",
            mc.pass,
            format!("⟨v⟩/η constant within {} SE at every efficiency", mc.sigmas),
        ));
        mean_constancy = Some(mc);
    }
    Ok(CalibrationDoc {
        config_hash: None,
        mode: "blind".into(),
        skipped: None,
        dark: reference,
        fit: Some(fit),
        expected: None,
        gain_scaling: None,
        mean_constancy,
        verdicts,
    })
}

/// Calibration of simulated recordings (simulation mode, known baseline).
pub fn calibrate_config(config: &RunConfig) -> Result<CalibrationDoc> {
    let models = config.validate()?;
    let hash = config.hash();
    let rec = simulate(config, &models)?;
    calibration_doc(config, &models, &rec, &hash)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()) || a == b
}

/// Re-derives the stored results of an output directory from its raw files
/// and checks that every recorded verdict passed.
pub fn check_output_dir(out: &Path) -> Result<Vec<Verdict>> {
    let config = RunConfig::from_json(&io::read_text(&out.join("config.json"))?)?;
    let models = config.validate()?;
    let hash = config.hash();
    let mut verdicts = Vec::new();

    let (dark, dark_header) = io::read_ensemble_with_header(&out.join("dark.csv"))?;
    let mut hashes_ok = dark_header.config_hash.as_deref() == Some(hash.as_str());
    let mut series = Vec::new();
    for i in 0..models.eta_series.len() {
        let (e, h) = io::read_ensemble_with_header(&ensemble_path(out, i))?;
        hashes_ok &= h.config_hash.as_deref() == Some(hash.as_str());
        hashes_ok &= e.eta == models.eta_series[i];
        series.push(e);
    }
    let (recon, h) = io::read_ensemble_with_header(&out.join("reconstruct.csv"))?;
    hashes_ok &= h.config_hash.as_deref() == Some(hash.as_str());
    let cal: CalibrationDoc = io::read_json(&out.join("calibration.json"))?;
    let moments: MomentsDoc = io::read_json(&out.join("moments.json"))?;
    let pm: PmMetricsDoc = io::read_json(&out.join("pm_metrics.json"))?;
    for stored in [&cal.config_hash, &moments.config_hash, &pm.config_hash] {
        hashes_ok &= stored.as_deref() == Some(hash.as_str());
    }
    let pm_text = io::read_text(&out.join("pm.csv"))?;
    hashes_ok &= pm_text.lines().next() == Some(format!("# config_hash={hash}").as_str());
    verdicts.push(Verdict::new("config_hash", hashes_ok, format!("all artifacts carry {hash}")));

    let sizes_ok = series.iter().all(|e| e.n_samples() == config.n_samples)
        && dark.n_samples() == config.dark_samples()
        && recon.n_samples() == config.reconstruct_samples();
    verdicts.push(Verdict::new("ensemble_sizes", sizes_ok, "sample counts match the config"));

    let d = DarkReference::from_samples(&dark.samples)?;
    let dark_ok = rel_close(d.mean, cal.dark.mean, 1e-12) && rel_close(d.variance, cal.dark.variance, 1e-12);
    verdicts.push(Verdict::new("dark_statistics", dark_ok, "dark.csv reproduces the stored baseline"));

    if let Some(fit) = &cal.fit {
        let reference = DarkReference::known(&models.dark, 1.0);
        let mut ok = fit.points.len() == series.len();
        for (e, p) in series.iter().zip(&fit.points) {
            let q = EtaSeriesPoint::from_ensemble(e, &reference)?;
            ok &= rel_close(q.mean_v, p.mean_v, 1e-12) && rel_close(q.fano_v, p.fano_v, 1e-12);
        }
        let refit = fit_fano_line(&fit.points)?;
        ok &= rel_close(refit.slope, fit.slope, 1e-12) || (refit.slope - fit.slope).abs() <= 1e-12 * fit.slope_se;
        ok &= rel_close(refit.intercept, fit.intercept, 1e-12);
        verdicts.push(Verdict::new("calibration_reproduces", ok, "points and fit re-derived from the ensembles"));
    }

    let mut ok = moments.series.len() == series.len();
    for (e, m) in series.iter().zip(&moments.series) {
        let zeroed = subtract_offset(e.clone(), models.dark.offset_raw)?;
        let s = sample_moments(&zeroed.samples, moments.order)?;
        ok &= (2..=moments.order).all(|r| rel_close(s.central(r), m.sample.central(r), 1e-12));
        ok &= rel_close(s.mean(), m.sample.mean(), 1e-12);
    }
    verdicts.push(Verdict::new("moments_reproduce", ok, "sample moments re-derived from the ensembles"));

    let rows = io::parse_pm(&out.join("pm.csv"), &pm_text)?;
    let total: f64 = rows.iter().map(|r| r.1).sum();
    let count: u64 = rows.iter().map(|r| r.2).sum();
    let zeroed = subtract_offset(recon, pm.dark_mean_subtracted)?;
    let again = rebin(&zeroed, pm.gamma_bar_used)?;
    let same_counts = again.counts.len() == rows.len() && again.counts.iter().zip(&rows).all(|(c, r)| *c == r.2);
    verdicts.push(Verdict::new(
        "pm_normalized",
        (total - 1.0).abs() < 1e-9 && count == zeroed.n_samples() as u64,
        format!("Σ pmf_hat = {total}, Σ count = {count}"),
    ));
    verdicts.push(Verdict::new("pm_reproduces", same_counts, "rebinning reconstruct.csv gives pm.csv"));

    for v in cal.verdicts.iter().chain(&moments.verdicts).chain(&pm.verdicts) {
        verdicts.push(Verdict::new(format!("recorded:{}", v.name), v.pass, v.detail.clone()));
    }
    Ok(verdicts)
}
