//! Photon-number distributions `P_n` of the light entering the apparatus.

use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::summation::NeumaierSum;

/// Default cumulative tail mass below which infinite-support PMFs are cut.
pub const DEFAULT_TAIL_EPSILON: f64 = 1e-12;

/// Upper bound on the number of PMF entries a constructor may produce.
pub const MAX_SUPPORT: usize = 1 << 24;

/// Truncated photon-number PMF with its first two moments.
///
/// The table is not renormalized after truncation; `tail_mass` records the
/// probability that was cut off beyond `n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberDistribution {
    label: String,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    tail_mass: f64,
    mean: f64,
    variance: f64,
    mandel_q: Option<f64>,
}

impl PhotonNumberDistribution {
    /// Coherent light: Poisson PMF.
    pub fn poisson(mean: f64) -> Result<Self> {
        Self::poisson_with_tail(mean, DEFAULT_TAIL_EPSILON)
    }

    pub fn poisson_with_tail(mean: f64, tail_epsilon: f64) -> Result<Self> {
        check_mean(mean)?;
        check_epsilon(tail_epsilon)?;
        let label = format!("poisson(mean={mean})");
        if mean == 0.0 {
            return Ok(Self::from_table_unchecked(label, vec![1.0], 0.0));
        }
        let ln_mean = mean.ln();
        let (pmf, tail) = generate_until_tail(
            mean,
            tail_epsilon,
            |n| (n as f64 * ln_mean - mean - ln_factorial(n as u64)).exp(),
            |n| mean / (n + 1) as f64,
        )?;
        Ok(Self::from_table_unchecked(label, pmf, tail))
    }

    /// Single-mode thermal (Bose–Einstein) light.
    pub fn thermal(mean: f64) -> Result<Self> {
        Self::thermal_with_tail(mean, DEFAULT_TAIL_EPSILON)
    }

    pub fn thermal_with_tail(mean: f64, tail_epsilon: f64) -> Result<Self> {
        Self::multimode_thermal_with_tail(mean, 1, tail_epsilon)
    }

    /// Multimode thermal light: negative binomial with `modes` equally
    /// populated modes of mean `mean / modes` each.
    pub fn multimode_thermal(mean: f64, modes: u32) -> Result<Self> {
        Self::multimode_thermal_with_tail(mean, modes, DEFAULT_TAIL_EPSILON)
    }

    pub fn multimode_thermal_with_tail(mean: f64, modes: u32, tail_epsilon: f64) -> Result<Self> {
        check_mean(mean)?;
        check_epsilon(tail_epsilon)?;
        if modes == 0 {
            return Err(Error::invalid("modes", "must be at least 1"));
        }
        let label = if modes == 1 {
            format!("thermal(mean={mean})")
        } else {
            format!("multimode_thermal(mean={mean}, modes={modes})")
        };
        if mean == 0.0 {
            return Ok(Self::from_table_unchecked(label, vec![1.0], 0.0));
        }
        let mu = f64::from(modes);
        let per_mode = mean / mu;
        let ln_p0 = -mu * per_mode.ln_1p();
        let ln_ratio = per_mode.ln() - per_mode.ln_1p();
        // ln P_n accumulated through P_n / P_{n-1} = (1 + (μ − 1)/n) · r;
        // differences of ln Γ lose all precision once μ is large.
        let mut ln_p = ln_p0;
        let (pmf, tail) = generate_until_tail(
            mean,
            tail_epsilon,
            |n| {
                if n > 0 {
                    ln_p += ((mu - 1.0) / n as f64).ln_1p() + ln_ratio;
                }
                ln_p.exp()
            },
            |n| (n as f64 + mu) / (n + 1) as f64 * (per_mode / (1.0 + per_mode)),
        )?;
        Ok(Self::from_table_unchecked(label, pmf, tail))
    }

    /// Photon-number eigenstate `|n⟩`.
    pub fn fock(n: usize) -> Result<Self> {
        if n >= MAX_SUPPORT {
            return Err(Error::invalid("n", format!("exceeds support limit {MAX_SUPPORT}")));
        }
        let mut pmf = vec![0.0; n + 1];
        pmf[n] = 1.0;
        Ok(Self::from_table_unchecked(format!("fock(n={n})"), pmf, 0.0))
    }

    /// Arbitrary PMF; the table is normalized to unit sum.
    pub fn from_pmf(table: &[f64]) -> Result<Self> {
        if let Some(bad) = table.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid("pmf", format!("entries must be finite and >= 0, found {bad}")));
        }
        let total: f64 = table.iter().copied().sum::<NeumaierSum>().value();
        if total <= 0.0 {
            return Err(Error::invalid("pmf", "needs at least one positive entry"));
        }
        let mut pmf: Vec<f64> = table.iter().map(|p| p / total).collect();
        while pmf.len() > 1 && pmf.last() == Some(&0.0) {
            pmf.pop();
        }
        Ok(Self::from_table_unchecked(format!("pmf(len={})", table.len()), pmf, 0.0))
    }

    pub(crate) fn from_table_unchecked(label: String, pmf: Vec<f64>, tail_mass: f64) -> Self {
        let mut acc = NeumaierSum::new();
        let cdf = pmf
            .iter()
            .map(|&p| {
                acc.push(p);
                acc.value()
            })
            .collect();
        let mean = pmf
            .iter()
            .enumerate()
            .map(|(n, &p)| n as f64 * p)
            .sum::<NeumaierSum>()
            .value();
        let variance = pmf
            .iter()
            .enumerate()
            .map(|(n, &p)| (n as f64 - mean).powi(2) * p)
            .sum::<NeumaierSum>()
            .value();
        let mandel_q = (mean > 0.0).then(|| (variance - mean) / mean);
        Self {
            label,
            pmf,
            cdf,
            tail_mass,
            mean,
            variance,
            mandel_q,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Probability of `n` photons; zero beyond the truncation index.
    pub fn prob(&self, n: usize) -> f64 {
        self.pmf.get(n).copied().unwrap_or(0.0)
    }

    pub fn n_max(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Second central moment `μ₂(n)`.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `[μ₂(n) − ⟨n⟩]/⟨n⟩`; `None` for the vacuum.
    pub fn mandel_q(&self) -> Option<f64> {
        self.mandel_q
    }

    /// Draws a photon number by inverse-CDF lookup.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.n_max())
    }
}

impl Distribution<usize> for PhotonNumberDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        PhotonNumberDistribution::sample(self, rng)
    }
}

fn check_mean(mean: f64) -> Result<()> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(Error::invalid("mean", format!("must be finite and >= 0, got {mean}")));
    }
    Ok(())
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("tail_epsilon", format!("must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

/// Evaluates `term(n)` for n = 0, 1, … in order until the index has passed
/// the mean and the remaining probability is below `eps`.
///
/// `ratio(n)` is `P_{n+1}/P_n`, non-increasing past the mean, so the tail
/// beyond `n` is bounded by the geometric series `P_n ρ/(1 − ρ)`.
fn generate_until_tail(
    mean: f64,
    eps: f64,
    mut term: impl FnMut(usize) -> f64,
    ratio: impl Fn(usize) -> f64,
) -> Result<(Vec<f64>, f64)> {
    let mut pmf = Vec::new();
    loop {
        let n = pmf.len();
        if n >= MAX_SUPPORT {
            return Err(Error::invalid(
                "mean",
                format!("truncated support would exceed {MAX_SUPPORT} entries"),
            ));
        }
        let p = term(n);
        pmf.push(p);
        if n as f64 >= mean {
            let rho = ratio(n);
            if rho < 1.0 {
                let tail = p * rho / (1.0 - rho);
                if tail < eps {
                    return Ok((pmf, tail));
                }
            }
        }
    }
}

/// Source description as it appears in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Poisson { mean: f64 },
    Thermal { mean: f64 },
    MultimodeThermal { mean: f64, modes: u32 },
    Fock { n: usize },
    Pmf { table: Vec<f64> },
}

impl SourceSpec {
    pub fn build(&self, tail_epsilon: f64) -> Result<PhotonNumberDistribution> {
        match self {
            SourceSpec::Poisson { mean } => PhotonNumberDistribution::poisson_with_tail(*mean, tail_epsilon),
            SourceSpec::Thermal { mean } => PhotonNumberDistribution::thermal_with_tail(*mean, tail_epsilon),
            SourceSpec::MultimodeThermal { mean, modes } => {
                PhotonNumberDistribution::multimode_thermal_with_tail(*mean, *modes, tail_epsilon)
            }
            SourceSpec::Fock { n } => PhotonNumberDistribution::fock(*n),
            SourceSpec::Pmf { table } => PhotonNumberDistribution::from_pmf(table),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn vacuum_poisson() {
        let d = PhotonNumberDistribution::poisson(0.0).unwrap();
        assert_eq!(d.pmf(), &[1.0]);
        assert_eq!(d.mandel_q(), None);
    }

    #[test]
    fn poisson_values() {
        let d = PhotonNumberDistribution::poisson(5.0).unwrap();
        // e^-5 5^5 / 5! evaluated directly
        let expected = (-5.0f64).exp() * 3125.0 / 120.0;
        assert!(close(d.prob(5), expected, 1e-13));
        assert!(close(d.prob(5), 0.17547, 1e-5));
        let d = PhotonNumberDistribution::poisson(50.0).unwrap();
        assert!(d.mandel_q().unwrap().abs() < 1e-10);
        assert!(d.tail_mass() <= DEFAULT_TAIL_EPSILON);
    }

    #[test]
    fn thermal_values() {
        let d = PhotonNumberDistribution::thermal(0.0).unwrap();
        assert_eq!(d.pmf(), &[1.0]);
        let d = PhotonNumberDistribution::thermal(1.0).unwrap();
        assert!(close(d.prob(0), 0.5, 1e-14));
        assert!(close(d.prob(1), 0.25, 1e-14));
        let d = PhotonNumberDistribution::thermal(10.0).unwrap();
        assert!(close(d.mandel_q().unwrap(), 10.0, 1e-8));
        for n in 0..50 {
            let exact = 10f64.powi(n as i32) / 11f64.powi(n as i32 + 1);
            assert!(close(d.prob(n), exact, 1e-14 * exact.max(1e-300) + 1e-16));
        }
    }

    #[test]
    fn multimode_limits() {
        assert_eq!(
            PhotonNumberDistribution::multimode_thermal(7.5, 1).unwrap().pmf(),
            PhotonNumberDistribution::thermal(7.5).unwrap().pmf()
        );
        let d = PhotonNumberDistribution::multimode_thermal(50.0, 50).unwrap();
        assert!(close(d.mandel_q().unwrap(), 1.0, 1e-8));
        assert!(matches!(
            PhotonNumberDistribution::multimode_thermal(5.0, 0),
            Err(Error::InvalidParameter { name: "modes", .. })
        ));
    }

    #[test]
    fn many_modes_approach_poisson() {
        let nb = PhotonNumberDistribution::multimode_thermal(50.0, 100_000).unwrap();
        let po = PhotonNumberDistribution::poisson(50.0).unwrap();
        let len = nb.pmf().len().max(po.pmf().len());
        let tv: f64 = 0.5 * (0..len).map(|n| (nb.prob(n) - po.prob(n)).abs()).sum::<f64>();
        assert!(tv < 1e-3, "tv = {tv}");
    }

    #[test]
    fn fock_states() {
        let d = PhotonNumberDistribution::fock(0).unwrap();
        assert_eq!(d.pmf(), &[1.0]);
        assert_eq!(d.mandel_q(), None);
        assert_eq!(PhotonNumberDistribution::fock(1).unwrap().mandel_q(), Some(-1.0));
        let d = PhotonNumberDistribution::fock(7).unwrap();
        assert_eq!(d.mean(), 7.0);
        assert_eq!(d.variance(), 0.0);
    }

    #[test]
    fn arbitrary_tables() {
        assert_eq!(PhotonNumberDistribution::from_pmf(&[1.0]).unwrap().pmf(), &[1.0]);
        assert_eq!(PhotonNumberDistribution::from_pmf(&[0.0, 2.0]).unwrap().pmf(), &[0.0, 1.0]);
        let d = PhotonNumberDistribution::from_pmf(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(close(d.mean(), 1.5, 1e-15));
        assert!(close(d.variance(), 1.25, 1e-15));
        assert!(PhotonNumberDistribution::from_pmf(&[0.0, 0.0]).is_err());
        assert!(PhotonNumberDistribution::from_pmf(&[0.5, -0.1]).is_err());
        assert!(PhotonNumberDistribution::from_pmf(&[]).is_err());
        assert!(PhotonNumberDistribution::from_pmf(&[f64::NAN]).is_err());
    }

    #[test]
    fn rejects_bad_means() {
        assert!(PhotonNumberDistribution::poisson(-1.0).is_err());
        assert!(PhotonNumberDistribution::poisson(f64::INFINITY).is_err());
        assert!(PhotonNumberDistribution::thermal(f64::NAN).is_err());
    }

    #[test]
    fn degenerate_sampling() {
        let mut rng = substream(1, 0);
        let vac = PhotonNumberDistribution::fock(0).unwrap();
        let three = PhotonNumberDistribution::fock(3).unwrap();
        for _ in 0..1000 {
            assert_eq!(vac.sample(&mut rng), 0);
            assert_eq!(three.sample(&mut rng), 3);
        }
    }

    #[test]
    fn poisson_sample_mean() {
        let d = PhotonNumberDistribution::poisson(50.0).unwrap();
        let mut rng = substream(2, 0);
        let n = 1_000_000;
        let mean = (0..n).map(|_| d.sample(&mut rng) as f64).sum::<f64>() / n as f64;
        assert!((mean - 50.0).abs() < 5.0 * (50.0 / n as f64).sqrt(), "mean = {mean}");
    }

    #[test]
    fn source_kind_parses_from_config_json() {
        let kind: SourceSpec = serde_json::from_str(r#"{"kind":"multimode_thermal","mean":20,"modes":4}"#).unwrap();
        assert_eq!(kind, SourceSpec::MultimodeThermal { mean: 20.0, modes: 4 });
        let d = kind.build(1e-12).unwrap();
        assert!(close(d.mandel_q().unwrap(), 5.0, 1e-8));
        assert!(serde_json::from_str::<SourceSpec>(r#"{"kind":"laser"}"#).is_err());
    }
}
