//! Invariants checked over random inputs.

use photon_stats::channel::{apply_bernoulli, detected_fano};
use photon_stats::config::RunConfig;
use photon_stats::detector::{
    simulate_ensemble_traced, DarkNoiseModel, GainModel, GainSpec, VoltageEnsemble,
};
use photon_stats::moments::{analytic_voltage_moments, cumulants_from_moments, moments_from_cumulants, CumulantSet};
use photon_stats::reconstruction::rebin;
use photon_stats::source::{PhotonNumberDistribution, SourceSpec};
use proptest::prelude::*;

fn pmf_table() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1..30).prop_filter("needs mass", |t| t.iter().sum::<f64>() > 1e-3)
}

fn gain() -> impl Strategy<Value = GainModel> {
    (0.5f64..200.0, 0.0f64..0.5, 0usize..2).prop_map(|(g, rel, family)| match family {
        0 => GainModel::gaussian(g, rel * g).unwrap(),
        _ => GainModel::gamma(g, (rel * g).max(1e-3 * g)).unwrap(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cumulant_round_trip(kappa in prop::collection::vec(-50.0f64..50.0, 1..=5)) {
        let m = moments_from_cumulants(&CumulantSet::new(kappa.clone()).unwrap()).unwrap();
        let back = cumulants_from_moments(&m).unwrap();
        let scale = kappa.iter().fold(1.0f64, |a, k| a.max(k.abs())).powi(kappa.len() as i32);
        for (a, b) in back.as_slice().iter().zip(&kappa) {
            prop_assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn detected_pmf_is_normalized(table in pmf_table(), eta in 0.0f64..=1.0) {
        let src = PhotonNumberDistribution::from_pmf(&table).unwrap();
        let d = apply_bernoulli(&src, eta).unwrap();
        let total: f64 = d.pmf().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(d.pmf().iter().all(|&p| p >= 0.0));
        prop_assert!(d.pmf().len() <= src.pmf().len());
    }

    #[test]
    fn losses_compose(table in pmf_table(), e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0) {
        let src = PhotonNumberDistribution::from_pmf(&table).unwrap();
        let twice = apply_bernoulli(&apply_bernoulli(&src, e1).unwrap().as_source(), e2).unwrap();
        let once = apply_bernoulli(&src, e1 * e2).unwrap();
        for m in 0..src.pmf().len() {
            prop_assert!((twice.prob(m) - once.prob(m)).abs() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn mean_and_fano_follow_efficiency(table in pmf_table(), eta in 0.01f64..=1.0) {
        let src = PhotonNumberDistribution::from_pmf(&table).unwrap();
        prop_assume!(src.mean() > 1e-3);
        let d = apply_bernoulli(&src, eta).unwrap();
        prop_assert!((d.mean() - eta * src.mean()).abs() < 1e-12 * src.mean().max(1.0));
        let q = src.mandel_q().unwrap();
        let fano = detected_fano(&d).unwrap();
        prop_assert!((fano - (eta * q + 1.0)).abs() < 1e-9, "{fano} vs {}", eta * q + 1.0);
    }

    #[test]
    fn voltage_moments_decompose(table in pmf_table(), eta in 0.0f64..=1.0, g in gain(), s0 in 0.0f64..20.0) {
        let d = apply_bernoulli(&PhotonNumberDistribution::from_pmf(&table).unwrap(), eta).unwrap();
        let dark = DarkNoiseModel::new(s0, 0.0).unwrap();
        let m = analytic_voltage_moments(&d, &g, &dark, 3).unwrap();
        let gb = g.gamma_bar();
        prop_assert!((m.mean() - d.mean() * gb).abs() < 1e-12 * gb * d.m_max().max(1) as f64);
        let var = gb * gb * d.central_moment(2) + d.mean() * g.sigma2() + s0 * s0;
        prop_assert!((m.central(2) - var).abs() < 1e-9 * var.max(1.0));
    }

    #[test]
    fn gain_scaling_scales_central_moments(table in pmf_table(), eta in 0.05f64..=1.0, g in gain(), factor in 0.1f64..10.0) {
        let d = apply_bernoulli(&PhotonNumberDistribution::from_pmf(&table).unwrap(), eta).unwrap();
        prop_assume!(d.central_moment(2) > 1e-6);
        let dark = DarkNoiseModel::new(3.0, 0.0).unwrap();
        let scaled_dark = DarkNoiseModel::new(3.0 * factor, 0.0).unwrap();
        let a = analytic_voltage_moments(&d, &g, &dark, 4).unwrap();
        let b = analytic_voltage_moments(&d, &g.scaled(factor).unwrap(), &scaled_dark, 4).unwrap();
        prop_assert!((b.mean() - factor * a.mean()).abs() <= 1e-10 * b.mean().abs().max(1.0));
        for r in [2usize, 4] {
            let want = factor.powi(r as i32) * a.central(r);
            prop_assert!((b.central(r) - want).abs() <= 1e-9 * want.abs(), "r={r}");
        }
    }

    #[test]
    fn rebinning_is_scale_covariant(
        samples in prop::collection::vec(-500.0f64..5000.0, 1..400),
        gamma_bar in 1.0f64..200.0,
        k in -3i32..=3,
    ) {
        // powers of two keep v/γ̄ bit-identical
        let factor = 2f64.powi(k);
        let e = VoltageEnsemble::new(samples, 0.5, 0);
        let a = rebin(&e, gamma_bar).unwrap();
        let b = rebin(&e.clone().scaled(factor), gamma_bar * factor).unwrap();
        prop_assert_eq!(&a.counts, &b.counts);
        prop_assert_eq!(a.underflow_count, b.underflow_count);
        prop_assert_eq!(a.counts.iter().sum::<u64>(), e.n_samples() as u64);
        let total: f64 = a.pmf_hat.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_gain_recovers_latent_counts(table in pmf_table(), eta in 0.0f64..=1.0, gamma_bar in 0.1f64..500.0, seed: u64) {
        let src = PhotonNumberDistribution::from_pmf(&table).unwrap();
        let gain = GainModel::gaussian(gamma_bar, 0.0).unwrap();
        let traced = simulate_ensemble_traced(&src, eta, &gain, &DarkNoiseModel::noiseless(), 500, seed, 1).unwrap();
        let r = rebin(&traced.ensemble, gamma_bar).unwrap();
        let mut want = vec![0u64; r.counts.len().max(1)];
        for &m in &traced.latent_m {
            let m = m as usize;
            if m >= want.len() {
                want.resize(m + 1, 0);
            }
            want[m] += 1;
        }
        while want.len() > 1 && want.last() == Some(&0) {
            want.pop();
        }
        let mut got = r.counts.clone();
        while got.len() > 1 && got.last() == Some(&0) {
            got.pop();
        }
        prop_assert_eq!(got, want);
        prop_assert_eq!(r.underflow_count, 0);
    }

    #[test]
    fn config_round_trips(
        mean in 0.0f64..1e3,
        kind in 0usize..4,
        g in 1.0f64..1e3,
        s in 0.0f64..10.0,
        s0 in 0.0f64..50.0,
        offset in -100.0f64..100.0,
        etas in prop::collection::vec(0.001f64..=1.0, 3..12),
        seed: u64,
        workers in 1usize..16,
        scales in prop::collection::vec(0.01f64..100.0, 0..4),
        recon in prop::option::of(0.0f64..=1.0),
    ) {
        let source = match kind {
            0 => SourceSpec::Poisson { mean },
            1 => SourceSpec::Thermal { mean },
            2 => SourceSpec::MultimodeThermal { mean, modes: 3 },
            _ => SourceSpec::Fock { n: mean as usize },
        };
        let text = serde_json::json!({
            "source": source,
            "gain": GainSpec::Gamma { gamma_bar: g, sigma: s },
            "dark": DarkNoiseModel::new(s0, offset).unwrap(),
            "eta_series": etas,
            "n_samples": 20000,
            "seed": seed,
            "workers": workers,
            "gain_scale": scales,
            "reconstruct_eta": recon,
        })
        .to_string();
        let c = RunConfig::from_json(&text).unwrap();
        let back = RunConfig::from_json(&c.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.hash(), c.hash());
    }
}
