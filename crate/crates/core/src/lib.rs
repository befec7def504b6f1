//! Photon statistics from linear (non photon-counting) detectors.
//!
//! A detector that answers each detected photon with a voltage `γ` of mean
//! `γ̄` and small spread `σ` lets the detected-photon distribution `P_m` be
//! recovered from raw voltages: measure the voltage ensemble at several
//! efficiencies `η`, fit `μ₂(v)/⟨v⟩` against `⟨v⟩` to obtain `γ̄` as the
//! intercept, then rebin the voltages into bins of width `γ̄`.
//!
//! The crate provides the whole chain:
//!
//! * [`source`]: photon-number distributions `P_n`
//! * [`channel`]: the Bernoulli loss channel `P_n → P_m`
//! * [`detector`]: gain and baseline models, Monte Carlo voltage ensembles
//! * [`moments`]: sample and exact moments, moment ↔ cumulant algebra
//! * [`calibration`]: the η sweep, the line fit and its consistency checks
//! * [`reconstruction`]: offset subtraction, rebinning and quality metrics
//! * [`runner`]: config-driven experiments writing CSV/JSON/Markdown output

pub mod calibration;
pub mod channel;
pub mod config;
pub mod detector;
pub mod error;
pub mod io;
pub mod moments;
pub mod reconstruction;
pub mod rng;
pub mod runner;
pub mod source;
pub mod summation;

pub use error::{Error, Result};
