//! Linear detector and read-out chain.
//!
//! One detected photon is converted into a voltage `γ` drawn from the gain
//! distribution `p_γ`; `k` detected photons give the sum of `k` independent
//! draws. A zero-mean Gaussian baseline (the dark distribution) is added once
//! per shot.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::channel::{self, DetectedPhotonDistribution};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::source::PhotonNumberDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainFamily {
    Gaussian,
    Gamma,
    Empirical,
}

#[derive(Debug, Clone, PartialEq)]
enum GainShape {
    Gaussian,
    Gamma { shape: f64, scale: f64 },
    Empirical(EmpiricalTable),
}

/// Distribution `p_γ` of the single-photon conversion factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GainModel {
    shape: GainShape,
    gamma_bar: f64,
    sigma2: f64,
    /// Central moments `μ̃_r`, r = 2..=5.
    central: [f64; 4],
    /// Cumulants `κ_r`, r = 1..=5.
    cumulants: [f64; 5],
}

impl GainModel {
    pub fn gaussian(gamma_bar: f64, sigma: f64) -> Result<Self> {
        check_gain(gamma_bar, sigma)?;
        let s2 = sigma * sigma;
        Ok(Self::from_central(GainShape::Gaussian, gamma_bar, [s2, 0.0, 3.0 * s2 * s2, 0.0]))
    }

    /// Gamma-distributed gain with shape `γ̄²/σ²` and scale `σ²/γ̄`;
    /// `sigma = 0` degenerates to a point mass.
    pub fn gamma(gamma_bar: f64, sigma: f64) -> Result<Self> {
        check_gain(gamma_bar, sigma)?;
        if sigma == 0.0 {
            let mut g = Self::from_central(GainShape::Gaussian, gamma_bar, [0.0; 4]);
            g.shape = GainShape::Gamma {
                shape: f64::INFINITY,
                scale: 0.0,
            };
            return Ok(g);
        }
        let s2 = sigma * sigma;
        let shape = gamma_bar * gamma_bar / s2;
        let scale = s2 / gamma_bar;
        let mut cumulants = [0.0; 5];
        let mut factorial = 1.0;
        for (i, kappa) in cumulants.iter_mut().enumerate() {
            let r = i + 1;
            if r > 1 {
                factorial *= (r - 1) as f64;
            }
            *kappa = shape * scale.powi(r as i32) * factorial;
        }
        let [_, k2, k3, k4, k5] = cumulants;
        Ok(Self {
            shape: GainShape::Gamma { shape, scale },
            gamma_bar,
            sigma2: s2,
            central: [k2, k3, k4 + 3.0 * k2 * k2, k5 + 10.0 * k2 * k3],
            cumulants,
        })
    }

    /// Gain density given as a table on a grid of voltages, linearly
    /// interpolated between grid points. The table need not be normalized.
    pub fn empirical(grid: &[f64], density: &[f64]) -> Result<Self> {
        let table = EmpiricalTable::new(grid, density)?;
        let gamma_bar = table.mean;
        if gamma_bar <= 0.0 {
            return Err(Error::invalid("gamma_bar", "empirical table has nonpositive mean"));
        }
        let central = [2, 3, 4, 5].map(|r| table.central_moment(r));
        Ok(Self::from_central(GainShape::Empirical(table), gamma_bar, central))
    }

    fn from_central(shape: GainShape, gamma_bar: f64, central: [f64; 4]) -> Self {
        let [m2, m3, m4, m5] = central;
        let cumulants = [gamma_bar, m2, m3, m4 - 3.0 * m2 * m2, m5 - 10.0 * m2 * m3];
        Self {
            shape,
            gamma_bar,
            sigma2: m2,
            central,
            cumulants,
        }
    }

    pub fn family(&self) -> GainFamily {
        match self.shape {
            GainShape::Gaussian => GainFamily::Gaussian,
            GainShape::Gamma { .. } => GainFamily::Gamma,
            GainShape::Empirical(_) => GainFamily::Empirical,
        }
    }

    pub fn gamma_bar(&self) -> f64 {
        self.gamma_bar
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// `μ̃_r` for r in 2..=5.
    pub fn central_moment(&self, r: usize) -> f64 {
        assert!((2..=5).contains(&r), "gain central moments are defined for r = 2..=5");
        self.central[r - 2]
    }

    /// `κ_1..κ_5`.
    pub fn cumulants(&self) -> [f64; 5] {
        self.cumulants
    }

    /// The same gain shape with every voltage multiplied by `g`.
    pub fn scaled(&self, g: f64) -> Result<Self> {
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::invalid("gain_scale", format!("must be finite and > 0, got {g}")));
        }
        Ok(match &self.shape {
            GainShape::Gaussian => Self::gaussian(g * self.gamma_bar, g * self.sigma())?,
            GainShape::Gamma { .. } => Self::gamma(g * self.gamma_bar, g * self.sigma())?,
            GainShape::Empirical(t) => {
                let grid: Vec<f64> = t.grid.iter().map(|x| g * x).collect();
                Self::empirical(&grid, &t.density)?
            }
        })
    }

    /// Total conversion of `k` detected photons, `Σ_{i=1}^k γ_i`.
    ///
    /// Gaussian and gamma gains are closed under convolution, so the sum is
    /// drawn from its exact distribution in one step.
    pub fn sample_sum<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let kf = k as f64;
        match &self.shape {
            GainShape::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                kf * self.gamma_bar + (kf * self.sigma2).sqrt() * z
            }
            GainShape::Gamma { shape, scale } => {
                if *scale == 0.0 {
                    kf * self.gamma_bar
                } else {
                    Gamma::new(kf * shape, *scale)
                        .expect("positive gamma parameters")
                        .sample(rng)
                }
            }
            GainShape::Empirical(t) => (0..k).map(|_| t.sample(rng)).sum(),
        }
    }
}

fn check_gain(gamma_bar: f64, sigma: f64) -> Result<()> {
    if !(gamma_bar.is_finite() && gamma_bar > 0.0) {
        return Err(Error::invalid("gamma_bar", format!("must be finite and > 0, got {gamma_bar}")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid("sigma", format!("must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

/// Piecewise-linear density on a grid.
#[derive(Debug, Clone, PartialEq)]
struct EmpiricalTable {
    grid: Vec<f64>,
    density: Vec<f64>,
    /// Cumulative area up to each grid point, normalized to end at 1.
    cumulative: Vec<f64>,
    area: f64,
    mean: f64,
}

// 4-point Gauss–Legendre on [-1, 1]: exact for polynomials up to degree 7,
// i.e. (x − c)^5 times a linear density.
const GL_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

impl EmpiricalTable {
    fn new(grid: &[f64], density: &[f64]) -> Result<Self> {
        if grid.len() != density.len() || grid.len() < 2 {
            return Err(Error::invalid(
                "empirical_table",
                "grid and density must have equal length >= 2",
            ));
        }
        if grid.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("empirical_table", "grid must be finite and nonnegative"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("empirical_table", "grid must be strictly increasing"));
        }
        if density.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("empirical_table", "density entries must be finite and >= 0"));
        }
        let mut cumulative = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 0..grid.len() - 1 {
            acc += 0.5 * (density[i] + density[i + 1]) * (grid[i + 1] - grid[i]);
            cumulative.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::invalid("empirical_table", "density has zero area"));
        }
        cumulative.iter_mut().for_each(|c| *c /= acc);
        let mut table = Self {
            grid: grid.to_vec(),
            density: density.to_vec(),
            cumulative,
            area: acc,
            mean: 0.0,
        };
        table.mean = table.integrate(|x| x);
        Ok(table)
    }

    /// `∫ f(x) p(x) dx` with `p` the normalized interpolated density.
    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.grid.len() - 1 {
            let (x0, x1) = (self.grid[i], self.grid[i + 1]);
            let (p0, p1) = (self.density[i], self.density[i + 1]);
            let half = 0.5 * (x1 - x0);
            let mid = 0.5 * (x1 + x0);
            for (t, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
                let x = mid + half * t;
                let p = p0 + (p1 - p0) * (x - x0) / (x1 - x0);
                total += w * half * f(x) * p;
            }
        }
        total / self.area
    }

    fn central_moment(&self, r: i32) -> f64 {
        let c = self.mean;
        self.integrate(|x| (x - c).powi(r))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let i = (self.cumulative.partition_point(|&c| c <= u).max(1) - 1).min(self.grid.len() - 2);
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let (p0, p1) = (self.density[i] / self.area, self.density[i + 1] / self.area);
        let h = x1 - x0;
        let target = u - self.cumulative[i];
        // Solve p0 t + (p1 − p0) t² / (2h) = target for t in [0, h].
        let disc = (p0 * p0 + 2.0 * (p1 - p0) * target / h).max(0.0);
        let denom = p0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * target / denom } else { 0.0 };
        x0 + t.clamp(0.0, h)
    }
}

/// Gain description as it appears in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainSpec {
    Gaussian { gamma_bar: f64, sigma: f64 },
    Gamma { gamma_bar: f64, sigma: f64 },
    Empirical { grid: Vec<f64>, density: Vec<f64> },
}

impl GainSpec {
    pub fn build(&self) -> Result<GainModel> {
        match self {
            GainSpec::Gaussian { gamma_bar, sigma } => GainModel::gaussian(*gamma_bar, *sigma),
            GainSpec::Gamma { gamma_bar, sigma } => GainModel::gamma(*gamma_bar, *sigma),
            GainSpec::Empirical { grid, density } => GainModel::empirical(grid, density),
        }
    }
}

/// Zero-light voltage distribution: Gaussian baseline noise around a raw
/// offset. Once the offset has been subtracted the baseline has mean zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DarkNoiseModel {
    pub sigma0: f64,
    #[serde(default)]
    pub offset_raw: f64,
}

impl DarkNoiseModel {
    pub fn new(sigma0: f64, offset_raw: f64) -> Result<Self> {
        if !(sigma0.is_finite() && sigma0 >= 0.0) {
            return Err(Error::invalid("sigma0", format!("must be finite and >= 0, got {sigma0}")));
        }
        if !offset_raw.is_finite() {
            return Err(Error::invalid("offset_raw", "must be finite"));
        }
        Ok(Self { sigma0, offset_raw })
    }

    pub fn noiseless() -> Self {
        Self {
            sigma0: 0.0,
            offset_raw: 0.0,
        }
    }

    /// Zero-mean baseline draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma0 == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(rng);
        self.sigma0 * z
    }

    pub fn variance(&self) -> f64 {
        self.sigma0 * self.sigma0
    }

    /// Cumulants of the zeroed baseline, `(0, σ₀², 0, 0, 0)`.
    pub fn cumulants(&self) -> [f64; 5] {
        [0.0, self.variance(), 0.0, 0.0, 0.0]
    }
}

/// One voltage for `m` detected photons on the zeroed scale.
pub fn sample_voltage<R: Rng + ?Sized>(m: usize, gain: &GainModel, dark: &DarkNoiseModel, rng: &mut R) -> f64 {
    let d = dark.sample(rng);
    d + gain.sample_sum(m, rng)
}

/// Recorded voltages of a series of shots at fixed efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageEnsemble {
    pub samples: Vec<f64>,
    pub eta: f64,
    pub seed: u64,
    /// Known multiplicative factor applied to every voltage.
    pub gain_scale: f64,
    pub truth: Option<Arc<DetectedPhotonDistribution>>,
}

impl VoltageEnsemble {
    pub fn new(samples: Vec<f64>, eta: f64, seed: u64) -> Self {
        Self {
            samples,
            eta,
            seed,
            gain_scale: 1.0,
            truth: None,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn with_truth(mut self, truth: Arc<DetectedPhotonDistribution>) -> Self {
        self.truth = Some(truth);
        self
    }

    /// Multiplies every voltage by `g` (amplifier gain or ADC scale change).
    pub fn scaled(mut self, g: f64) -> Self {
        self.samples.iter_mut().for_each(|v| *v *= g);
        self.gain_scale *= g;
        self
    }
}

/// Simulated ensemble together with the latent detected-photon counts.
#[derive(Debug, Clone)]
pub struct TracedEnsemble {
    pub ensemble: VoltageEnsemble,
    pub latent_m: Vec<u32>,
}

fn check_sim(eta: f64, n_samples: usize, workers: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid("eta", format!("must lie in [0, 1], got {eta}")));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be at least 1"));
    }
    if workers == 0 {
        return Err(Error::invalid("workers", "must be at least 1"));
    }
    Ok(())
}

fn shard_bounds(n_samples: usize, workers: usize) -> Vec<(u64, usize)> {
    let chunk = n_samples.div_ceil(workers);
    (0..workers)
        .map(|w| (w as u64, chunk.min(n_samples.saturating_sub(w * chunk))))
        .filter(|&(_, len)| len > 0)
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn simulate_shards(
    source: &PhotonNumberDistribution,
    eta: f64,
    gain: &GainModel,
    dark: &DarkNoiseModel,
    n_samples: usize,
    seed: u64,
    workers: usize,
    keep_latent: bool,
) -> (Vec<f64>, Vec<u32>) {
    let shards: Vec<(Vec<f64>, Vec<u32>)> = shard_bounds(n_samples, workers)
        .into_par_iter()
        .map(|(index, len)| {
            let mut rng = substream(seed, index);
            let mut volts = Vec::with_capacity(len);
            let mut latent = Vec::with_capacity(if keep_latent { len } else { 0 });
            for _ in 0..len {
                let n = source.sample(&mut rng);
                let m = channel::thin(n, eta, &mut rng);
                volts.push(dark.offset_raw + sample_voltage(m, gain, dark, &mut rng));
                if keep_latent {
                    latent.push(m as u32);
                }
            }
            (volts, latent)
        })
        .collect();
    let mut volts = Vec::with_capacity(n_samples);
    let mut latent = Vec::with_capacity(if keep_latent { n_samples } else { 0 });
    for (v, l) in shards {
        volts.extend(v);
        latent.extend(l);
    }
    (volts, latent)
}

/// Simulates `n_samples` independent shots.
///
/// Shots are split into `workers` contiguous shards; shard `i` draws from
/// substream `i` of `seed`, and shards are concatenated in index order, so
/// the output depends only on `(seed, workers)`. Voltages are recorded raw,
/// i.e. including the dark model's `offset_raw`.
pub fn simulate_ensemble(
    source: &PhotonNumberDistribution,
    eta: f64,
    gain: &GainModel,
    dark: &DarkNoiseModel,
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<VoltageEnsemble> {
    check_sim(eta, n_samples, workers)?;
    let (samples, _) = simulate_shards(source, eta, gain, dark, n_samples, seed, workers, false);
    Ok(VoltageEnsemble::new(samples, eta, seed))
}

/// As [`simulate_ensemble`], also returning the detected-photon count of
/// every shot.
pub fn simulate_ensemble_traced(
    source: &PhotonNumberDistribution,
    eta: f64,
    gain: &GainModel,
    dark: &DarkNoiseModel,
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<TracedEnsemble> {
    check_sim(eta, n_samples, workers)?;
    let (samples, latent_m) = simulate_shards(source, eta, gain, dark, n_samples, seed, workers, true);
    Ok(TracedEnsemble {
        ensemble: VoltageEnsemble::new(samples, eta, seed),
        latent_m,
    })
}

/// Zero-light recording: raw baseline only.
pub fn simulate_dark(dark: &DarkNoiseModel, n_samples: usize, seed: u64, workers: usize) -> Result<VoltageEnsemble> {
    check_sim(0.0, n_samples, workers)?;
    let samples: Vec<f64> = shard_bounds(n_samples, workers)
        .into_par_iter()
        .map(|(index, len)| {
            let mut rng = substream(seed, index);
            (0..len).map(|_| dark.offset_raw + dark.sample(&mut rng)).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat();
    Ok(VoltageEnsemble::new(samples, 0.0, seed))
}

fn gaussian_components(
    detected: &DetectedPhotonDistribution,
    gain: &GainModel,
    dark: &DarkNoiseModel,
) -> Result<Vec<(f64, f64, f64)>> {
    if gain.family() != GainFamily::Gaussian {
        return Err(Error::UnsupportedOracle("closed-form P_v needs a gaussian gain"));
    }
    let mut components = Vec::new();
    for (k, &p) in detected.pmf().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let var = k as f64 * gain.sigma2() + dark.variance();
        if var <= 0.0 {
            return Err(Error::UnsupportedOracle("mixture component has zero width"));
        }
        components.push((p, k as f64 * gain.gamma_bar(), var.sqrt()));
    }
    Ok(components)
}

/// Closed-form voltage density on the zeroed scale:
/// `Σ_k P_k · Normal(v; kγ̄, kσ² + σ₀²)`.
pub fn analytic_pv_gaussian(
    detected: &DetectedPhotonDistribution,
    gain: &GainModel,
    dark: &DarkNoiseModel,
    v_grid: &[f64],
) -> Result<Vec<f64>> {
    let components = gaussian_components(detected, gain, dark)?;
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    Ok(v_grid
        .iter()
        .map(|&v| {
            components
                .iter()
                .map(|&(p, mu, s)| {
                    let z = (v - mu) / s;
                    p * (-0.5 * z * z).exp() / (norm * s)
                })
                .sum()
        })
        .collect())
}

/// Cumulative distribution of the same mixture.
pub fn analytic_cdf_gaussian(
    detected: &DetectedPhotonDistribution,
    gain: &GainModel,
    dark: &DarkNoiseModel,
    v_grid: &[f64],
) -> Result<Vec<f64>> {
    let components = gaussian_components(detected, gain, dark)?;
    Ok(v_grid
        .iter()
        .map(|&v| {
            components
                .iter()
                .map(|&(p, mu, s)| p * 0.5 * erfc(-(v - mu) / (s * std::f64::consts::SQRT_2)))
                .sum()
        })
        .collect())
}
