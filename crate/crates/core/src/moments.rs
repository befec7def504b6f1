//! Moment and cumulant machinery.
//!
//! * sample estimators (two-pass, compensated, deterministic chunked merge)
//! * the moment ↔ cumulant recursion
//!   `μ′_j = κ_j + Σ_{s=1}^{j−1} C(j−1, s−1) κ_s μ′_{j−s}` and its inverse
//! * cumulant additivity for i.i.d. sums
//! * the exact central moments of the voltage mixture and the narrow-gain
//!   scaling approximation `μ_r(v) ≈ γ̄^r μ_r(m)`
//!
//! Supported orders are 1 through 5.

use std::ops::{Add, Mul, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::DetectedPhotonDistribution;
use crate::detector::{DarkNoiseModel, GainModel};
use crate::error::{Error, Result};
use crate::summation::NeumaierSum;

pub const MAX_ORDER: usize = 5;

/// Samples per chunk in parallel reductions. Fixed so that the merge order,
/// and therefore every rounding, is independent of the thread count.
pub const CHUNK: usize = 1 << 15;

fn check_order(order: usize) -> Result<()> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    Ok(())
}

/// Binomial coefficient for the small arguments used here.
pub fn binomial(n: u32, k: u32) -> u32 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * u64::from(n - i) / u64::from(i + 1)) as u32
}

/// Raw moments `μ′_1..μ′_J` from cumulants `κ_1..κ_J`.
///
/// Generic over the scalar so the same recursion can be evaluated on exact
/// integers or symbolic polynomials.
pub fn raw_from_cumulants<T>(kappa: &[T]) -> Vec<T>
where
    T: Clone + From<u32> + Add<Output = T> + Mul<Output = T>,
{
    let mut raw: Vec<T> = Vec::with_capacity(kappa.len());
    for j in 1..=kappa.len() {
        let mut acc = kappa[j - 1].clone();
        for s in 1..j {
            let c = T::from(binomial((j - 1) as u32, (s - 1) as u32));
            acc = acc + c * kappa[s - 1].clone() * raw[j - s - 1].clone();
        }
        raw.push(acc);
    }
    raw
}

/// Inverse of [`raw_from_cumulants`].
pub fn cumulants_from_raw<T>(raw: &[T]) -> Vec<T>
where
    T: Clone + From<u32> + Add<Output = T> + Sub<Output = T> + Mul<Output = T>,
{
    let mut kappa: Vec<T> = Vec::with_capacity(raw.len());
    for j in 1..=raw.len() {
        let mut acc = raw[j - 1].clone();
        for s in 1..j {
            let c = T::from(binomial((j - 1) as u32, (s - 1) as u32));
            acc = acc - c * kappa[s - 1].clone() * raw[j - s - 1].clone();
        }
        kappa.push(acc);
    }
    kappa
}

/// Mean, central moments and raw moments of a distribution up to `order`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    order: usize,
    mean: f64,
    /// `μ_r` at index r, r = 0..=order (μ_0 = total mass, μ_1 = 0).
    central: Vec<f64>,
    /// `μ′_r` at index r, r = 0..=order.
    raw: Vec<f64>,
}

impl MomentSet {
    /// Builds the set from the mean and central moments `μ_2..μ_order`;
    /// raw moments follow from the binomial expansion.
    pub fn from_central(mean: f64, central_from_2: &[f64]) -> Result<Self> {
        let order = central_from_2.len() + 1;
        check_order(order)?;
        let mut central = vec![1.0, 0.0];
        central.extend_from_slice(central_from_2);
        let raw = (0..=order)
            .map(|r| {
                (0..=r)
                    .map(|j| f64::from(binomial(r as u32, j as u32)) * central[j] * mean.powi((r - j) as i32))
                    .sum::<NeumaierSum>()
                    .value()
            })
            .collect();
        Ok(Self {
            order,
            mean,
            central,
            raw,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `μ_r`, r in 0..=order.
    pub fn central(&self, r: usize) -> f64 {
        self.central[r]
    }

    /// `μ′_r`, r in 0..=order.
    pub fn raw(&self, r: usize) -> f64 {
        self.raw[r]
    }

    /// `μ_r / ⟨x⟩`.
    pub fn central_over_mean(&self, r: usize) -> f64 {
        self.central[r] / self.mean
    }
}

#[derive(Serialize, Deserialize)]
struct MomentSetRepr {
    order: usize,
    mean: f64,
    /// μ_2..μ_order
    central: Vec<f64>,
    /// μ′_1..μ′_order
    raw: Vec<f64>,
}

impl Serialize for MomentSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MomentSetRepr {
            order: self.order,
            mean: self.mean,
            central: self.central[2..].to_vec(),
            raw: self.raw[1..].to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MomentSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MomentSetRepr::deserialize(d)?;
        let mut set = MomentSet::from_central(repr.mean, &repr.central).map_err(serde::de::Error::custom)?;
        if repr.raw.len() == set.order {
            set.raw[1..].copy_from_slice(&repr.raw);
        }
        Ok(set)
    }
}

/// Cumulants `κ_1..κ_order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet {
    kappa: Vec<f64>,
}

impl CumulantSet {
    pub fn new(kappa: Vec<f64>) -> Result<Self> {
        check_order(kappa.len())?;
        Ok(Self { kappa })
    }

    pub fn order(&self) -> usize {
        self.kappa.len()
    }

    /// `κ_r`, r in 1..=order.
    pub fn kappa(&self, r: usize) -> f64 {
        self.kappa[r - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.kappa
    }
}

/// Moments of the distribution with cumulants `c`.
pub fn moments_from_cumulants(c: &CumulantSet) -> Result<MomentSet> {
    check_order(c.order())?;
    let raw = raw_from_cumulants(&c.kappa);
    // Central moments are the raw moments of the same law shifted to zero
    // mean, i.e. the recursion with κ₁ = 0. Computing them this way avoids
    // the cancellation of the binomial expansion when |κ₁| is large.
    let mut centered = c.kappa.clone();
    centered[0] = 0.0;
    let central_raw = raw_from_cumulants(&centered);
    let mut central = vec![1.0, 0.0];
    central.extend_from_slice(&central_raw[1..]);
    let mut raw_full = vec![1.0];
    raw_full.extend(raw);
    Ok(MomentSet {
        order: c.order(),
        mean: c.kappa[0],
        central,
        raw: raw_full,
    })
}

/// Cumulants of the distribution with moments `m`.
pub fn cumulants_from_moments(m: &MomentSet) -> Result<CumulantSet> {
    check_order(m.order)?;
    // Cumulants of order ≥ 2 are shift invariant: invert the recursion on
    // the central moments and put the mean back as κ₁.
    let mut kappa = cumulants_from_raw(&m.central[1..=m.order]);
    kappa[0] = m.mean;
    Ok(CumulantSet { kappa })
}

/// Cumulants of the sum of `k` i.i.d. copies.
pub fn scale_cumulants(c: &CumulantSet, k: u64) -> CumulantSet {
    CumulantSet {
        kappa: c.kappa.iter().map(|x| k as f64 * x).collect(),
    }
}

/// Element-wise cumulant sum (independent addition of two variables).
pub fn add_cumulants(a: &CumulantSet, b: &CumulantSet) -> Result<CumulantSet> {
    if a.order() != b.order() {
        return Err(Error::invalid("order", "cumulant sets of different order"));
    }
    Ok(CumulantSet {
        kappa: a.kappa.iter().zip(&b.kappa).map(|(x, y)| x + y).collect(),
    })
}

/// Compensated power sums `Σ (x − c)^p`, p = 1..=max_power, about a fixed
/// shift `c`. Mergeable, so sharded accumulation and leave-one-block-out
/// resampling are both exact differences of sums.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSums {
    shift: f64,
    count: usize,
    sums: Vec<NeumaierSum>,
}

impl PowerSums {
    pub fn new(shift: f64, max_power: usize) -> Self {
        Self {
            shift,
            count: 0,
            sums: vec![NeumaierSum::new(); max_power],
        }
    }

    pub fn from_samples(samples: &[f64], shift: f64, max_power: usize) -> Self {
        samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut ps = PowerSums::new(shift, max_power);
                chunk.iter().for_each(|&x| ps.push(x));
                ps
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(PowerSums::new(shift, max_power), |acc, ps| acc.merged(&ps))
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        let d = x - self.shift;
        let mut p = d;
        for s in &mut self.sums {
            s.push(p);
            p *= d;
        }
        self.count += 1;
    }

    pub fn merged(mut self, other: &PowerSums) -> PowerSums {
        debug_assert_eq!(self.shift, other.shift);
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a = *a + *b;
        }
        self.count += other.count;
        self
    }

    pub fn without(&self, other: &PowerSums) -> PowerSums {
        let mut out = self.clone();
        for (a, b) in out.sums.iter_mut().zip(&other.sums) {
            *a = *a - *b;
        }
        out.count -= other.count;
        out
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.sums[0].value() / self.count as f64
    }

    /// Plug-in central moment `(1/N) Σ (x − x̄)^r`.
    pub fn central(&self, r: usize) -> f64 {
        assert!(r <= self.sums.len(), "power sums only go to {}", self.sums.len());
        let n = self.count as f64;
        let d = self.sums[0].value() / n;
        (0..=r)
            .map(|j| {
                let s_j = if j == 0 { 1.0 } else { self.sums[j - 1].value() / n };
                f64::from(binomial(r as u32, j as u32)) * s_j * (-d).powi((r - j) as i32)
            })
            .sum::<NeumaierSum>()
            .value()
    }

    pub fn moment_set(&self, order: usize) -> Result<MomentSet> {
        let central: Vec<f64> = (2..=order).map(|r| self.central(r)).collect();
        MomentSet::from_central(self.mean(), &central)
    }
}

fn sample_mean(samples: &[f64]) -> f64 {
    let total = samples
        .par_chunks(CHUNK)
        .map(|c| c.iter().copied().sum::<NeumaierSum>())
        .collect::<Vec<_>>()
        .into_iter()
        .fold(NeumaierSum::new(), |a, b| a + b);
    total.value() / samples.len() as f64
}

/// Power sums about the sample mean (the first of the two passes).
pub fn centered_power_sums(samples: &[f64], max_power: usize) -> Result<PowerSums> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    Ok(PowerSums::from_samples(samples, sample_mean(samples), max_power))
}

/// Plug-in sample moments through `order` (2..=5).
pub fn sample_moments(samples: &[f64], order: usize) -> Result<MomentSet> {
    if !(2..=MAX_ORDER).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    centered_power_sums(samples, order)?.moment_set(order)
}

/// Value and standard error of a statistic from a block jackknife.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JackknifeEstimate {
    pub value: f64,
    pub se: f64,
}

/// Per-block power sums of contiguous, non-overlapping blocks whose sizes
/// differ by at most one.
pub fn block_power_sums(samples: &[f64], shift: f64, max_power: usize, blocks: usize) -> Vec<PowerSums> {
    let n = samples.len();
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * n / blocks;
            let hi = (b + 1) * n / blocks;
            let mut ps = PowerSums::new(shift, max_power);
            samples[lo..hi].iter().for_each(|&x| ps.push(x));
            ps
        })
        .collect()
}

/// Delete-one-block jackknife of `estimator` over `blocks` blocks.
pub fn block_jackknife<F>(samples: &[f64], max_power: usize, blocks: usize, estimator: F) -> Result<JackknifeEstimate>
where
    F: Fn(&PowerSums) -> f64,
{
    if blocks < 2 || samples.len() < 2 * blocks {
        return Err(Error::InsufficientData {
            needed: 2 * blocks.max(2),
            got: samples.len(),
        });
    }
    let shift = sample_mean(samples);
    let parts = block_power_sums(samples, shift, max_power, blocks);
    let full = parts
        .iter()
        .fold(PowerSums::new(shift, max_power), |acc, p| acc.merged(p));
    Ok(jackknife_from_blocks(&full, &parts, estimator))
}

pub fn jackknife_from_blocks<F>(full: &PowerSums, parts: &[PowerSums], estimator: F) -> JackknifeEstimate
where
    F: Fn(&PowerSums) -> f64,
{
    let b = parts.len() as f64;
    let loo: Vec<f64> = parts.iter().map(|p| estimator(&full.without(p))).collect();
    let loo_mean = loo.iter().sum::<f64>() / b;
    let var = (b - 1.0) / b * loo.iter().map(|t| (t - loo_mean).powi(2)).sum::<f64>();
    JackknifeEstimate {
        value: estimator(full),
        se: var.sqrt(),
    }
}

/// Exact moments of the recorded voltage for a detected-photon distribution
/// seen through `gain` and `dark`.
///
/// Evaluates `μ_r(v) = Σ_j C(r, j) (−⟨v⟩)^{r−j} Σ_k P_k μ′_j(v^{(k)})`
/// where `v^{(k)}` has cumulants `k κ^{(γ)} + κ^{(dark)}`. The binomial sum
/// is folded into each component by shifting its first cumulant by `−⟨v⟩`,
/// which is algebraically identical and keeps the large, cancelling powers
/// of `⟨v⟩` out of the arithmetic.
pub fn analytic_voltage_moments(
    detected: &DetectedPhotonDistribution,
    gain: &GainModel,
    dark: &DarkNoiseModel,
    order: usize,
) -> Result<MomentSet> {
    check_order(order)?;
    let gamma_k = gain.cumulants();
    let dark_k = dark.cumulants();
    let mean_v = detected
        .pmf()
        .iter()
        .enumerate()
        .map(|(k, &p)| p * (k as f64 * gamma_k[0] + dark_k[0]))
        .sum::<NeumaierSum>()
        .value();

    let mut central = vec![NeumaierSum::new(); order + 1];
    let mut raw = vec![NeumaierSum::new(); order + 1];
    let mut kappa = vec![0.0; order];
    for (k, &p) in detected.pmf().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (r, slot) in kappa.iter_mut().enumerate() {
            *slot = k as f64 * gamma_k[r] + dark_k[r];
        }
        let component_raw = raw_from_cumulants(&kappa);
        kappa[0] -= mean_v;
        let component_central = raw_from_cumulants(&kappa);
        central[0].push(p);
        raw[0].push(p);
        for r in 1..=order {
            central[r].push(p * component_central[r - 1]);
            raw[r].push(p * component_raw[r - 1]);
        }
    }
    let mut central: Vec<f64> = central.iter().map(NeumaierSum::value).collect();
    central[1] = 0.0;
    Ok(MomentSet {
        order,
        mean: mean_v,
        central,
        raw: raw.iter().map(NeumaierSum::value).collect(),
    })
}

/// Narrow-gain approximation `μ_r(v) = γ̄^r μ_r(m)`, `⟨v⟩ = γ̄ ⟨m⟩`.
pub fn narrow_gain_moments(detected: &DetectedPhotonDistribution, gamma_bar: f64, order: usize) -> Result<MomentSet> {
    check_order(order)?;
    let central: Vec<f64> = (2..=order)
        .map(|r| gamma_bar.powi(r as i32) * detected.central_moment(r))
        .collect();
    MomentSet::from_central(gamma_bar * detected.mean(), &central)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::apply_bernoulli;
    use crate::source::PhotonNumberDistribution;
    use rand::Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(5, 5), 1);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn constant_samples() {
        let m = sample_moments(&[4.5, 4.5, 4.5], 5).unwrap();
        assert_eq!(m.mean(), 4.5);
        for r in 2..=5 {
            assert_eq!(m.central(r), 0.0);
        }
    }

    #[test]
    fn two_point_samples() {
        let m = sample_moments(&[0.0, 2.0], 4).unwrap();
        assert_eq!(m.mean(), 1.0);
        assert_eq!(m.central(2), 1.0);
        assert_eq!(m.central(3), 0.0);
        assert_eq!(m.central(4), 1.0);
        assert_eq!(m.raw(2), 2.0);
        assert!(matches!(sample_moments(&[1.0], 2), Err(Error::InsufficientData { .. })));
        assert!(matches!(sample_moments(&[1.0, 2.0], 6), Err(Error::UnsupportedOrder(6))));
    }

    #[test]
    fn large_offset_does_not_cancel() {
        // ⟨v⟩ ≫ √μ₂: the two-pass scheme keeps full relative precision
        let xs: Vec<f64> = (0..10_000).map(|i| 1e9 + (i % 2) as f64).collect();
        let m = sample_moments(&xs, 4).unwrap();
        assert!(rel(m.central(2), 0.25) < 1e-12);
        assert!(m.central(3).abs() < 1e-12);
        assert!(rel(m.central(4), 0.0625) < 1e-12);
    }

    #[test]
    fn point_mass_and_gaussian_cumulants() {
        let m = moments_from_cumulants(&CumulantSet::new(vec![3.0, 0.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        for j in 1..=5 {
            assert_eq!(m.raw(j), 3f64.powi(j as i32));
        }
        let m = moments_from_cumulants(&CumulantSet::new(vec![0.0, 1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        assert_eq!((m.raw(2), m.raw(3), m.raw(4)), (1.0, 0.0, 3.0));
    }

    #[test]
    fn poisson_cumulants_against_pmf_sums() {
        let lambda = 2.0;
        let m = moments_from_cumulants(&CumulantSet::new(vec![lambda; 5]).unwrap()).unwrap();
        let pmf = PhotonNumberDistribution::poisson_with_tail(lambda, 1e-200).unwrap();
        for j in 1..=5 {
            let brute: f64 = pmf.pmf().iter().enumerate().map(|(n, p)| (n as f64).powi(j) * p).sum();
            assert!(rel(m.raw(j as usize), brute) < 1e-10, "j={j}");
        }
        assert!((m.raw(2) - 6.0).abs() < 1e-12);
        assert!((m.raw(3) - 22.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_moments_to_cumulants() {
        // Gamma(k=4, θ=1): E[X^j] = 4·5·…·(3+j)
        let raw: Vec<f64> = (1..=5).map(|j| (0..j).map(|i| 4.0 + i as f64).product()).collect();
        let mean = raw[0];
        let central: Vec<f64> = (2..=5)
            .map(|r| {
                (0..=r)
                    .map(|j| {
                        let mj = if j == 0 { 1.0 } else { raw[j - 1] };
                        f64::from(binomial(r as u32, j as u32)) * mj * (-mean).powi((r - j) as i32)
                    })
                    .sum()
            })
            .collect();
        let c = cumulants_from_moments(&MomentSet::from_central(mean, &central).unwrap()).unwrap();
        let mut fact = 1.0;
        for r in 1..=5 {
            if r > 1 {
                fact *= (r - 1) as f64;
            }
            assert!(rel(c.kappa(r), 4.0 * fact) < 1e-10, "r={r}");
        }
    }

    #[test]
    fn gaussian_moment_set_has_no_higher_cumulants() {
        let s2: f64 = 2.5;
        let m = MomentSet::from_central(7.0, &[s2, 0.0, 3.0 * s2 * s2, 0.0]).unwrap();
        let c = cumulants_from_moments(&m).unwrap();
        assert_eq!(c.kappa(1), 7.0);
        assert_eq!(c.kappa(2), s2);
        assert_eq!(c.kappa(3), 0.0);
        assert_eq!(c.kappa(4), 0.0);
        assert_eq!(c.kappa(5), 0.0);
    }

    #[test]
    fn order_cap() {
        assert!(matches!(CumulantSet::new(vec![0.0; 6]), Err(Error::UnsupportedOrder(6))));
        assert!(CumulantSet::new(vec![]).is_err());
    }

    #[test]
    fn cumulant_scaling() {
        let gain = GainModel::gaussian(100.0, 2.0).unwrap();
        let c = CumulantSet::new(gain.cumulants().to_vec()).unwrap();
        assert_eq!(scale_cumulants(&c, 1), c);
        assert!(scale_cumulants(&c, 0).as_slice().iter().all(|&k| k == 0.0));
        let three = scale_cumulants(&c, 3);
        assert_eq!((three.kappa(1), three.kappa(2)), (300.0, 12.0));
    }

    #[test]
    fn degenerate_gain_saturates_scaling_law() {
        let det = apply_bernoulli(&PhotonNumberDistribution::thermal(8.0).unwrap(), 0.6).unwrap();
        let gain = GainModel::gaussian(50.0, 0.0).unwrap();
        let exact = analytic_voltage_moments(&det, &gain, &DarkNoiseModel::noiseless(), 5).unwrap();
        let narrow = narrow_gain_moments(&det, 50.0, 5).unwrap();
        for r in 2..=5 {
            assert!(rel(exact.central(r), narrow.central(r)) < 1e-12, "r={r}");
        }
    }

    #[test]
    fn second_moment_with_dark() {
        let det = apply_bernoulli(&PhotonNumberDistribution::fock(12).unwrap(), 0.4).unwrap();
        let gain = GainModel::gamma(80.0, 6.0).unwrap();
        let dark = DarkNoiseModel::new(9.0, 0.0).unwrap();
        let m = analytic_voltage_moments(&det, &gain, &dark, 2).unwrap();
        let want = 80f64.powi(2) * det.central_moment(2) + det.mean() * 36.0 + 81.0;
        assert!(rel(m.central(2), want) < 1e-12);
        assert!(rel(m.mean(), 80.0 * det.mean()) < 1e-14);
    }

    #[test]
    fn narrow_gain_unit_conversion() {
        let det = apply_bernoulli(&PhotonNumberDistribution::poisson(50.0).unwrap(), 0.5).unwrap();
        let m = narrow_gain_moments(&det, 1.0, 4).unwrap();
        for r in 2..=4 {
            assert_eq!(m.central(r), det.central_moment(r));
        }
        let m = narrow_gain_moments(&det, 100.0, 2).unwrap();
        assert!(rel(m.central(2), 25.0e4) < 1e-9);
    }

    #[test]
    fn jackknife_of_mean_matches_standard_error() {
        let mut rng = crate::rng::substream(3, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let est = block_jackknife(&xs, 2, 20, |ps| ps.mean()).unwrap();
        let m = sample_moments(&xs, 2).unwrap();
        assert!(rel(est.value, m.mean()) < 1e-14);
        let naive = (m.central(2) / xs.len() as f64).sqrt();
        assert!((est.se / naive - 1.0).abs() < 0.5, "se = {} vs {naive}", est.se);
        assert!(block_jackknife(&xs[..10], 2, 20, |ps| ps.mean()).is_err());
    }

    #[test]
    fn moment_set_json_shape() {
        let m = sample_moments(&[0.0, 0.0, 300.0], 2).unwrap();
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["mean"], 100.0);
        assert_eq!(json["central"][0], 20000.0);
        let back: MomentSet = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);
    }
}
