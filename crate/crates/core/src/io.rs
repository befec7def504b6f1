//! File formats shared by the simulation and analysis stages.
//!
//! An ensemble file is plain text: `# key=value` header lines followed by
//! one voltage per line in shortest round-trip scientific notation.
//!
//! ```text
//! # eta=0.25
//! # seed=1234
//! # gain_scale=1
//! # config_hash=3f1c…
//! 1.0312e2
//! -4.1e0
//! ```
//!
//! Readers ignore header keys they do not know.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::detector::VoltageEnsemble;
use crate::error::{Error, Result};
use crate::reconstruction::ReconstructionResult;

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn ensemble_to_string(ensemble: &VoltageEnsemble, config_hash: Option<&str>) -> String {
    let mut out = String::with_capacity(24 * ensemble.n_samples() + 128);
    let _ = writeln!(out, "# eta={}", ensemble.eta);
    let _ = writeln!(out, "# seed={}", ensemble.seed);
    let _ = writeln!(out, "# gain_scale={}", ensemble.gain_scale);
    if let Some(hash) = config_hash {
        let _ = writeln!(out, "# config_hash={hash}");
    }
    for v in &ensemble.samples {
        let _ = writeln!(out, "{v:e}");
    }
    out
}

pub fn write_ensemble(path: &Path, ensemble: &VoltageEnsemble, config_hash: Option<&str>) -> Result<()> {
    write_text(path, &ensemble_to_string(ensemble, config_hash))
}

/// Header values of an ensemble file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnsembleHeader {
    pub eta: Option<f64>,
    pub seed: Option<u64>,
    pub gain_scale: Option<f64>,
    pub config_hash: Option<String>,
}

pub fn parse_ensemble(path: &Path, text: &str) -> Result<(VoltageEnsemble, EnsembleHeader)> {
    let mut header = EnsembleHeader::default();
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let Some((key, value)) = rest.split_once('=') else {
                continue;
            };
            let value = value.trim();
            let bad = |what: &str| format_error(path, format!("line {}: bad {what} `{value}`", i + 1));
            match key.trim() {
                "eta" => header.eta = Some(value.parse().map_err(|_| bad("eta"))?),
                "seed" => header.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "gain_scale" => header.gain_scale = Some(value.parse().map_err(|_| bad("gain_scale"))?),
                "config_hash" => header.config_hash = Some(value.to_string()),
                _ => {}
            }
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| format_error(path, format!("line {}: `{line}` is not a number", i + 1)))?;
        if !v.is_finite() {
            return Err(format_error(path, format!("line {}: non-finite voltage", i + 1)));
        }
        samples.push(v);
    }
    let mut ensemble = VoltageEnsemble::new(samples, header.eta.unwrap_or(f64::NAN), header.seed.unwrap_or(0));
    ensemble.gain_scale = header.gain_scale.unwrap_or(1.0);
    Ok((ensemble, header))
}

/// Reads an ensemble file. A missing `eta` header is reported as NaN.
pub fn read_ensemble(path: &Path) -> Result<VoltageEnsemble> {
    Ok(parse_ensemble(path, &read_text(path)?)?.0)
}

pub fn read_ensemble_with_header(path: &Path) -> Result<(VoltageEnsemble, EnsembleHeader)> {
    parse_ensemble(path, &read_text(path)?)
}

/// `m,pmf_hat,count` table of a reconstruction.
pub fn pm_to_string(result: &ReconstructionResult, config_hash: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(hash) = config_hash {
        let _ = writeln!(out, "# config_hash={hash}");
    }
    let _ = writeln!(out, "# gamma_bar={}", result.gamma_bar_used);
    out.push_str("m,pmf_hat,count\n");
    for (m, (p, c)) in result.pmf_hat.iter().zip(&result.counts).enumerate() {
        let _ = writeln!(out, "{m},{p:e},{c}");
    }
    out
}

/// Rows `(m, pmf_hat, count)` of a `pm.csv` file.
pub fn parse_pm(path: &Path, text: &str) -> Result<Vec<(usize, f64, u64)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("m,") {
            continue;
        }
        let bad = || format_error(path, format!("line {}: expected `m,pmf_hat,count`", i + 1));
        let mut cols = line.split(',');
        let mut next = || cols.next().map(str::trim).ok_or_else(bad);
        let m = next()?.parse().map_err(|_| bad())?;
        let p = next()?.parse().map_err(|_| bad())?;
        let c = next()?.parse().map_err(|_| bad())?;
        rows.push((m, p, c));
    }
    Ok(rows)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| format_error(path, e.to_string()))
}
