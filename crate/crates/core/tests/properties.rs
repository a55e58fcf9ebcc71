//! Property-based invariants of the formulas, the estimator and the simulator.

mod common;

use cam_core::class_stats::{
    class_models, general_c42_variance, mixture_statistics, noisy_variance_fourfold, noisy_variance_general, noisy_variance_real, MeanVar,
    NoisyPowerRatio,
};
use cam_core::classifier::{chi_square_cdf, chi_square_quantile, classify, AnalysisParams, RhoMode};
use cam_core::constellations::{
    alphabet_moments, cumulants_to_moments, moments_to_cumulants, Constellation, Modulation, MomentSet, Symmetry,
};
use cam_core::estimation::{center_signal, estimate_c42_frame, normalize_c42, squelch, SquelchGranularity, SquelchParams};
use cam_core::netsim::{synthesize_scenario, ScenarioConfig};
use cam_core::class_stats::AccessMethod;
use common::{rng, symbols};
use num_complex::Complex64;
use proptest::prelude::*;

fn modulation() -> impl Strategy<Value = Modulation> {
    prop_oneof![
        Just(Modulation::Bpsk),
        prop::sample::select(vec![4u32, 8, 16, 32, 64]).prop_map(Modulation::Psk),
        prop::sample::select(vec![4u32, 8, 16, 32, 64]).prop_map(Modulation::Pam),
        prop::sample::select(vec![4u32, 16, 64, 256, 1024]).prop_map(Modulation::Qam),
        Just(Modulation::V29),
        Just(Modulation::V32),
    ]
}

/// Arbitrary zero-mean, unit-power point set.
fn point_set() -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 2..24).prop_filter_map("degenerate", |raw| {
        let pts: Vec<Complex64> = raw.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
        let centered = center_signal(&pts).ok()?;
        let p = centered.iter().map(|z| z.norm_sqr()).sum::<f64>() / centered.len() as f64;
        (p > 1e-3).then(|| centered.iter().map(|z| z / p.sqrt()).collect())
    })
}

fn moments_close(a: &MomentSet, b: &MomentSet, tol: f64) -> bool {
    let pa = [a.m20, a.m21, a.m40, a.m41, a.m42, a.m43, a.m62, a.m63, a.m64, a.m84];
    let pb = [b.m20, b.m21, b.m40, b.m41, b.m42, b.m43, b.m62, b.m63, b.m64, b.m84];
    pa.iter().zip(&pb).all(|(x, y)| (x - y).norm() <= tol * (1.0 + y.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn moment_cumulant_round_trip(pts in point_set()) {
        let m = MomentSet::from_points(&pts);
        let back = cumulants_to_moments(&moments_to_cumulants(&m));
        prop_assert!(moments_close(&m, &back, 1e-10));
    }

    #[test]
    fn scaling_multiplies_moments_and_keeps_normalized_c42(pts in point_set(), a in 0.05f64..20.0) {
        let m = MomentSet::from_points(&pts);
        let scaled: Vec<Complex64> = pts.iter().map(|z| z * a).collect();
        let ms = MomentSet::from_points(&scaled);
        prop_assert!(moments_close(&ms, &m.scaled(a), 1e-10));
        let (c, cs) = (moments_to_cumulants(&m), moments_to_cumulants(&ms));
        let ratio = |c: &cam_core::constellations::CumulantSet| c.c42.re / (c.c21.re * c.c21.re);
        prop_assert!((ratio(&c) - ratio(&cs)).abs() < 1e-10);
    }

    #[test]
    fn general_formula_agrees_with_specialized_forms(m in modulation(), rho in 1.0f64..10.0) {
        let c = Constellation::new(m).unwrap();
        let cum = c.cumulants();
        let r = NoisyPowerRatio::new(rho).unwrap();
        let general = noisy_variance_general(&cum, r, 1).unwrap();
        let special = match c.symmetry() {
            Symmetry::Real => noisy_variance_real(&cum, r, 1).unwrap(),
            Symmetry::FourFold => noisy_variance_fourfold(&cum, r, 1).unwrap(),
            Symmetry::None => return Err(TestCaseError::fail(format!("{m} has no symmetry"))),
        };
        prop_assert!((general - special).abs() <= 1e-9 * general.abs().max(1.0), "{} vs {}", general, special);
        if rho == 1.0 {
            prop_assert!((general_c42_variance(&alphabet_moments(&c), 1) - special).abs() < 1e-9);
        }
    }

    #[test]
    fn fourfold_alphabets_have_vanishing_odd_cumulants(m in modulation()) {
        let c = Constellation::new(m).unwrap();
        if c.symmetry() == Symmetry::FourFold {
            let k = c.cumulants();
            prop_assert!(k.c20.norm() < 1e-12 && k.c41.norm() < 1e-12 && k.c43.norm() < 1e-12);
        }
    }

    #[test]
    fn normalized_c42_is_fading_invariant(m in modulation(), seed in 0u64..1000, mag in 0.01f64..100.0, phase in 0.0f64..std::f64::consts::TAU) {
        let x = symbols(m, 500, 0.0, &mut rng(seed));
        let h = Complex64::from_polar(mag, phase);
        let faded: Vec<Complex64> = x.iter().map(|s| s * h).collect();
        let norm = |y: &[Complex64]| {
            let fc = estimate_c42_frame(&center_signal(y).unwrap()).unwrap();
            normalize_c42(fc.c42, fc.c21, 0.0)
        };
        match (norm(&x), norm(&faded)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b),
            (a, b) => prop_assert!(a.is_err() && b.is_err()),
        }
    }

    #[test]
    fn class_variance_increases_with_noise(r1 in 1.0f64..8.0, dr in 0.01f64..4.0) {
        let (a, b) = (NoisyPowerRatio::new(r1).unwrap(), NoisyPowerRatio::new(r1 + dr).unwrap());
        for m in class_models(16).unwrap() {
            prop_assert!(m.j_var(b) > m.j_var(a), "{} not increasing at rho {}", m.label, r1);
        }
    }

    #[test]
    fn mixture_variance_dominates_weighted_component_variance(
        comps in prop::collection::vec((0.01f64..1.0, -2.0f64..0.0, 0.0f64..1.0), 1..6)
    ) {
        let total: f64 = comps.iter().map(|c| c.0).sum();
        let parts: Vec<(f64, MeanVar)> = comps.iter().map(|&(p, mean, var)| (p / total, MeanVar { mean, var })).collect();
        let mix = mixture_statistics(&parts).unwrap();
        let weighted: f64 = parts.iter().map(|(p, mv)| p * mv.var).sum();
        prop_assert!(mix.var >= weighted - 1e-12);
    }

    #[test]
    fn chi_square_quantile_inverts_cdf(p in 0.001f64..0.999, dof in 1u32..600) {
        let q = chi_square_quantile(p, dof).unwrap();
        prop_assert!((chi_square_cdf(q, dof) - p).abs() <= 1e-8);
    }

    #[test]
    fn squelch_never_grows_the_signal(seed in 0u64..500, noise in 0.01f64..2.0, window in 8usize..64) {
        let x = symbols(Modulation::Qam(16), 2000, noise, &mut rng(seed));
        let sq = SquelchParams { gate: 2.0, window, granularity: SquelchGranularity::Sample };
        prop_assert!(squelch(&x, noise, &sq).len() <= x.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn classification_is_scale_invariant(m in modulation(), seed in 0u64..1000, alpha in 0.1f64..10.0) {
        let sigma2 = 0.1;
        let x = symbols(m, 500 * 40, sigma2, &mut rng(seed));
        let params = AnalysisParams {
            frame_length: 500,
            frames: 40,
            noise_variance: sigma2,
            squelch: Some(SquelchParams::default()),
            p_c_given_t: 0.05,
            cdma_users: 16,
            rho: RhoMode::PerFrame,
        };
        let a = classify(&x, &params).unwrap();
        let scaled: Vec<Complex64> = x.iter().map(|s| s * alpha).collect();
        let b = classify(&scaled, &AnalysisParams { noise_variance: sigma2 * alpha * alpha, ..params }).unwrap();
        prop_assert_eq!(a.stage1_label, b.stage1_label);
        prop_assert_eq!(a.verdict, b.verdict);
        prop_assert!((a.w - b.w).abs() < 1e-9);
    }

    #[test]
    fn activity_invariants_hold(method in prop::sample::select(vec![AccessMethod::Tdma, AccessMethod::Ofdma, AccessMethod::Cdma, AccessMethod::Contention]),
                                seed in 0u64..10_000, load in 0.0f64..1.0) {
        let n_total = if method == AccessMethod::Cdma { 16 } else { 4 };
        let cfg = ScenarioConfig { method, n_total, load_g: load, f: 20, seed, ..Default::default() };
        let s = synthesize_scenario(&cfg).unwrap();
        let counts = s.activity.active_counts();
        match method {
            AccessMethod::Tdma => prop_assert!(counts.iter().all(|&c| c <= 1)),
            AccessMethod::Ofdma | AccessMethod::Cdma => prop_assert!(counts.iter().all(|&c| c as usize == n_total)),
            AccessMethod::Contention => {
                // every packet sample is counted exactly once
                let busy: usize = s.activity.users.iter().flatten().map(|r| r.len()).sum();
                prop_assert_eq!(counts.iter().map(|&c| c as usize).sum::<usize>(), busy);
            }
        }
        prop_assert_eq!(s.samples.len(), s.activity.len);
        // same config and seed, same samples
        prop_assert_eq!(synthesize_scenario(&cfg).unwrap().samples, s.samples);
    }
}
