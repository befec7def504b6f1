//! Bernoulli photodetection channel.
//!
//! Each of the `n` photons reaching the detector is detected independently
//! with probability `η`, so the detected-photon distribution is
//!
//! ```text
//! P_m = Σ_{n ≥ m} C(n, m) η^m (1 − η)^{n − m} P_n
//! ```
//!
//! The binomial kernel is generated row by row starting from the mode of
//! each row and recursing outwards, so no factorial is ever formed and no
//! intermediate underflows while the row still carries mass.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::source::PhotonNumberDistribution;
use crate::summation::NeumaierSum;

/// PMF of the number of detected photons for a given source and efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedPhotonDistribution {
    pmf: Vec<f64>,
    mean: f64,
    /// `μ_r(m)` for r = 2..=5 at index r − 2.
    central: [f64; 4],
    eta: f64,
    tail_mass: f64,
    source_ref: String,
}

impl DetectedPhotonDistribution {
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, m: usize) -> f64 {
        self.pmf.get(m).copied().unwrap_or(0.0)
    }

    pub fn m_max(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Central moment `μ_r(m)` for `r` in 0..=5.
    pub fn central_moment(&self, r: usize) -> f64 {
        match r {
            0 => self.pmf.iter().copied().sum::<NeumaierSum>().value(),
            1 => 0.0,
            2..=5 => self.central[r - 2],
            _ => panic!("central moments are stored through order 5, asked for {r}"),
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Probability mass lost to truncation of the parent `P_n`.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn source_ref(&self) -> &str {
        &self.source_ref
    }

    /// Reinterprets this PMF as incident light, so that channels can be
    /// chained.
    pub fn as_source(&self) -> PhotonNumberDistribution {
        PhotonNumberDistribution::from_table_unchecked(
            format!("{}|eta={}", self.source_ref, self.eta),
            self.pmf.clone(),
            self.tail_mass,
        )
    }

    /// Builds the distribution directly from a `P_m` table (no channel).
    pub fn from_pmf(pmf: Vec<f64>, eta: f64, tail_mass: f64, source_ref: impl Into<String>) -> Self {
        let mean = pmf
            .iter()
            .enumerate()
            .map(|(m, &p)| m as f64 * p)
            .sum::<NeumaierSum>()
            .value();
        let mut central = [0.0; 4];
        for (slot, r) in central.iter_mut().zip(2..=5) {
            *slot = pmf
                .iter()
                .enumerate()
                .map(|(m, &p)| (m as f64 - mean).powi(r) * p)
                .sum::<NeumaierSum>()
                .value();
        }
        Self {
            pmf,
            mean,
            central,
            eta,
            tail_mass,
            source_ref: source_ref.into(),
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid("eta", format!("must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

/// Fills `row[m] = C(n, m) η^m (1 − η)^{n − m}` for m = 0..=n.
fn binomial_row(n: usize, eta: f64, row: &mut Vec<f64>) {
    row.clear();
    row.resize(n + 1, 0.0);
    if eta == 0.0 {
        row[0] = 1.0;
        return;
    }
    if eta == 1.0 {
        row[n] = 1.0;
        return;
    }
    // Unnormalized row seeded at the mode, then scaled to unit sum; the row
    // is an exact PMF so this avoids evaluating C(n, m) at all.
    let mode = (((n + 1) as f64 * eta).floor() as usize).min(n);
    let odds = eta / (1.0 - eta);
    row[mode] = 1.0;
    for m in mode..n {
        let next = row[m] * (n - m) as f64 / (m + 1) as f64 * odds;
        if next == 0.0 {
            break;
        }
        row[m + 1] = next;
    }
    for m in (1..=mode).rev() {
        let prev = row[m] * m as f64 / (n - m + 1) as f64 / odds;
        if prev == 0.0 {
            break;
        }
        row[m - 1] = prev;
    }
    let total = row.iter().copied().sum::<NeumaierSum>().value();
    row.iter_mut().for_each(|b| *b /= total);
}

/// Pushes `source` through a Bernoulli channel of efficiency `eta`.
pub fn apply_bernoulli(source: &PhotonNumberDistribution, eta: f64) -> Result<DetectedPhotonDistribution> {
    check_eta(eta)?;
    let n_max = source.n_max();
    let mut columns = vec![NeumaierSum::new(); n_max + 1];
    let mut row = Vec::with_capacity(n_max + 1);
    for (n, &p_n) in source.pmf().iter().enumerate() {
        if p_n == 0.0 {
            continue;
        }
        binomial_row(n, eta, &mut row);
        for (col, &b) in columns.iter_mut().zip(&row) {
            if b != 0.0 {
                col.push(p_n * b);
            }
        }
    }
    let pmf = columns.iter().map(NeumaierSum::value).collect();
    Ok(DetectedPhotonDistribution::from_pmf(
        pmf,
        eta,
        source.tail_mass(),
        source.label(),
    ))
}

/// Draws one detected-photon count: a photon number from `source`, thinned
/// binomially with success probability `eta`.
pub fn sample_m<R: Rng + ?Sized>(source: &PhotonNumberDistribution, eta: f64, rng: &mut R) -> Result<usize> {
    check_eta(eta)?;
    let n = source.sample(rng);
    Ok(thin(n, eta, rng))
}

pub(crate) fn thin<R: Rng + ?Sized>(n: usize, eta: f64, rng: &mut R) -> usize {
    if eta == 0.0 || n == 0 {
        return 0;
    }
    if eta == 1.0 {
        return n;
    }
    let binomial = Binomial::new(n as u64, eta).expect("eta validated to lie in [0, 1]");
    binomial.sample(rng) as usize
}

/// `μ₂(m)/⟨m⟩` of a detected distribution.
pub fn detected_fano(dist: &DetectedPhotonDistribution) -> Result<f64> {
    if dist.mean() <= 0.0 {
        return Err(Error::UndefinedStatistic("μ₂(m)/⟨m⟩ needs ⟨m⟩ > 0"));
    }
    Ok(dist.central_moment(2) / dist.mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    /// Direct evaluation of the channel sum with exactly formed binomial
    /// coefficients; only usable for small supports.
    fn brute_force(source: &PhotonNumberDistribution, eta: f64) -> Vec<f64> {
        let n_max = source.n_max();
        (0..=n_max)
            .map(|m| {
                (m..=n_max)
                    .map(|n| {
                        let mut c = 1.0f64;
                        for i in 0..m {
                            c = c * (n - i) as f64 / (i + 1) as f64;
                        }
                        c * eta.powi(m as i32) * (1.0 - eta).powi((n - m) as i32) * source.prob(n)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn single_photon_half_efficiency() {
        let d = apply_bernoulli(&PhotonNumberDistribution::fock(1).unwrap(), 0.5).unwrap();
        assert!((d.prob(0) - 0.5).abs() < 1e-15);
        assert!((d.prob(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn agrees_with_brute_force_sum() {
        for source in [
            PhotonNumberDistribution::poisson(12.0).unwrap(),
            PhotonNumberDistribution::thermal(4.0).unwrap(),
            PhotonNumberDistribution::from_pmf(&[0.1, 0.0, 0.3, 0.2, 0.4]).unwrap(),
        ] {
            for eta in [0.1, 0.37, 0.9] {
                let fast = apply_bernoulli(&source, eta).unwrap();
                for (m, want) in brute_force(&source, eta).into_iter().enumerate() {
                    assert!((fast.prob(m) - want).abs() < 1e-13, "{} eta={eta} m={m}", source.label());
                }
            }
        }
    }

    #[test]
    fn poisson_and_thermal_thinning_closure() {
        let d = apply_bernoulli(&PhotonNumberDistribution::poisson(50.0).unwrap(), 0.2).unwrap();
        let p10 = PhotonNumberDistribution::poisson(10.0).unwrap();
        for m in 0..=d.m_max() {
            assert!((d.prob(m) - p10.prob(m)).abs() < 1e-10);
        }
        let d = apply_bernoulli(&PhotonNumberDistribution::thermal(10.0).unwrap(), 0.3).unwrap();
        let t3 = PhotonNumberDistribution::thermal(3.0).unwrap();
        for m in 0..=d.m_max() {
            assert!((d.prob(m) - t3.prob(m)).abs() < 1e-10);
        }
    }

    #[test]
    fn endpoints() {
        let src = PhotonNumberDistribution::thermal(6.0).unwrap();
        assert_eq!(apply_bernoulli(&src, 1.0).unwrap().pmf(), src.pmf());
        let dark = apply_bernoulli(&src, 0.0).unwrap();
        assert!((dark.prob(0) - src.pmf().iter().copied().sum::<NeumaierSum>().value()).abs() < 1e-15);
        assert!(dark.prob(0) >= 1.0 - src.tail_mass() - 1e-15);
        assert!(apply_bernoulli(&src, 1.2).is_err());
        assert!(apply_bernoulli(&src, -0.1).is_err());
        assert!(apply_bernoulli(&src, f64::NAN).is_err());
    }

    #[test]
    fn large_rows_do_not_underflow() {
        let src = PhotonNumberDistribution::fock(10_000).unwrap();
        let d = apply_bernoulli(&src, 0.2).unwrap();
        let total: f64 = d.pmf().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((d.mean() - 2000.0).abs() < 1e-8);
        assert!((d.central_moment(2) - 1600.0).abs() < 1e-6);
    }

    #[test]
    fn fano_values() {
        let fano = |src: PhotonNumberDistribution, eta| detected_fano(&apply_bernoulli(&src, eta).unwrap()).unwrap();
        assert!((fano(PhotonNumberDistribution::poisson(30.0).unwrap(), 0.4) - 1.0).abs() < 1e-9);
        assert!((fano(PhotonNumberDistribution::thermal(10.0).unwrap(), 0.3) - 4.0).abs() < 1e-8);
        assert!((fano(PhotonNumberDistribution::fock(5).unwrap(), 0.5) - 0.5).abs() < 1e-9);
        let vac = apply_bernoulli(&PhotonNumberDistribution::fock(0).unwrap(), 0.5).unwrap();
        assert!(matches!(detected_fano(&vac), Err(Error::UndefinedStatistic(_))));
    }

    #[test]
    fn sampling_endpoints_and_mean() {
        let src = PhotonNumberDistribution::poisson(20.0).unwrap();
        let mut a = substream(5, 0);
        let mut b = substream(5, 0);
        for _ in 0..1000 {
            assert_eq!(sample_m(&src, 0.0, &mut a).unwrap(), 0);
            let m = sample_m(&src, 1.0, &mut a).unwrap();
            // same stream position reproduces the photon number exactly
            let _ = src.sample(&mut b);
            assert_eq!(m, src.sample(&mut b));
        }
        let fock = PhotonNumberDistribution::fock(100).unwrap();
        let mut rng = substream(6, 0);
        let n = 1_000_000;
        let mean = (0..n).map(|_| sample_m(&fock, 0.25, &mut rng).unwrap() as f64).sum::<f64>() / n as f64;
        assert!((mean - 25.0).abs() < 5.0 * (18.75 / n as f64).sqrt(), "mean = {mean}");
    }
}
