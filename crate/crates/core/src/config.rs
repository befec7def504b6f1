//! Run configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{default_eta_series, MIN_SERIES_SAMPLES};
use crate::detector::{DarkNoiseModel, GainModel, GainSpec};
use crate::error::{Error, Result};
use crate::moments::MAX_ORDER;
use crate::source::{PhotonNumberDistribution, SourceSpec, DEFAULT_TAIL_EPSILON};

pub const SCHEMA_VERSION: u32 = 1;

/// Number of points in the default efficiency sweep.
pub const DEFAULT_SERIES_POINTS: usize = 10;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_eta_max() -> f64 {
    1.0
}
fn default_workers() -> usize {
    1
}
fn default_order() -> usize {
    4
}
fn default_tail() -> f64 {
    DEFAULT_TAIL_EPSILON
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub source: SourceSpec,
    pub gain: GainSpec,
    pub dark: DarkNoiseModel,
    /// Efficiencies of the calibration sweep; empty means the default series
    /// up to `eta_max`.
    #[serde(default)]
    pub eta_series: Vec<f64>,
    #[serde(default = "default_eta_max")]
    pub eta_max: f64,
    /// Shots per sweep point.
    pub n_samples: usize,
    /// Shots of the light-free recording; defaults to `n_samples`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dark_samples: Option<usize>,
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Known gain factors for the scaling check.
    #[serde(default)]
    pub gain_scale: Vec<f64>,
    #[serde(default = "default_order")]
    pub moment_order: usize,
    /// Efficiency of the reconstruction run; defaults to the largest sweep
    /// efficiency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruct_eta: Option<f64>,
    /// Shots of the reconstruction run; defaults to `n_samples`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruct_samples: Option<usize>,
    /// Bin width to use instead of the calibrated one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_bar_override: Option<f64>,
    #[serde(default = "default_tail")]
    pub tail_epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Built models of a validated configuration.
#[derive(Debug, Clone)]
pub struct Models {
    pub source: PhotonNumberDistribution,
    pub gain: GainModel,
    pub dark: DarkNoiseModel,
    pub eta_series: Vec<f64>,
    pub reconstruct_eta: f64,
}

fn field(name: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        field: name.into(),
        reason: reason.into(),
    }
}

fn nested(name: &str, e: Error) -> Error {
    field(name, e.to_string())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| field("<document>", e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        crate::io::to_json(self)
    }

    /// Sweep efficiencies after applying the default.
    pub fn eta_series(&self) -> Vec<f64> {
        if self.eta_series.is_empty() {
            default_eta_series(self.eta_max, DEFAULT_SERIES_POINTS)
        } else {
            self.eta_series.clone()
        }
    }

    pub fn dark_samples(&self) -> usize {
        self.dark_samples.unwrap_or(self.n_samples)
    }

    pub fn reconstruct_samples(&self) -> usize {
        self.reconstruct_samples.unwrap_or(self.n_samples)
    }

    /// Checks every field and builds the models.
    pub fn validate(&self) -> Result<Models> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if !(self.tail_epsilon > 0.0 && self.tail_epsilon < 1.0) {
            return Err(field("tail_epsilon", "must lie in (0, 1)"));
        }
        let source = self.source.build(self.tail_epsilon).map_err(|e| nested("source", e))?;
        let gain = self.gain.build().map_err(|e| nested("gain", e))?;
        let dark = DarkNoiseModel::new(self.dark.sigma0, self.dark.offset_raw).map_err(|e| nested("dark", e))?;
        if !(self.eta_max > 0.0 && self.eta_max <= 1.0) {
            return Err(field("eta_max", format!("must lie in (0, 1], got {}", self.eta_max)));
        }
        for (i, &eta) in self.eta_series.iter().enumerate() {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(field(format!("eta_series[{i}]"), format!("must lie in (0, 1], got {eta}")));
            }
        }
        let eta_series = self.eta_series();
        let mut distinct = eta_series.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(field("eta_series", "needs at least 3 distinct efficiencies"));
        }
        if self.n_samples < MIN_SERIES_SAMPLES {
            return Err(field("n_samples", format!("must be at least {MIN_SERIES_SAMPLES}")));
        }
        if self.dark_samples() < 2 * crate::calibration::JACKKNIFE_BLOCKS {
            return Err(field(
                "dark_samples",
                format!("must be at least {}", 2 * crate::calibration::JACKKNIFE_BLOCKS),
            ));
        }
        if self.reconstruct_samples() == 0 {
            return Err(field("reconstruct_samples", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(field("workers", "must be at least 1"));
        }
        if !(2..=MAX_ORDER).contains(&self.moment_order) {
            return Err(field("moment_order", format!("must lie in 2..={MAX_ORDER}")));
        }
        for (i, &g) in self.gain_scale.iter().enumerate() {
            if !(g.is_finite() && g > 0.0) {
                return Err(field(format!("gain_scale[{i}]"), format!("must be finite and > 0, got {g}")));
            }
        }
        let reconstruct_eta = match self.reconstruct_eta {
            Some(eta) if !(0.0..=1.0).contains(&eta) => {
                return Err(field("reconstruct_eta", format!("must lie in [0, 1], got {eta}")));
            }
            Some(eta) => eta,
            None => distinct[distinct.len() - 1],
        };
        if let Some(g) = self.gamma_bar_override {
            if !(g.is_finite() && g > 0.0) {
                return Err(field("gamma_bar_override", "must be finite and > 0"));
            }
        }
        Ok(Models {
            source,
            gain,
            dark,
            eta_series,
            reconstruct_eta,
        })
    }

    /// SHA-256 of the canonical JSON encoding, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
