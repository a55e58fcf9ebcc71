//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs under a custom harness so the lines come out in order. The process
//! exits successfully after reporting unless `ACCEPTANCE_STRICT=1`, in which
//! case any FAIL makes it exit with status 1.

mod common;

use std::time::{Duration, Instant};

use cam_core::class_stats::{class_models, noisy_variance, noisy_variance_fourfold, noisy_variance_general, noisy_variance_real, reference_table, AccessMethod, NoisyPowerRatio};
use cam_core::classifier::{chi_square_cdf, chi_square_quantile};
use cam_core::constellations::{cumulants_to_moments, moments_to_cumulants, Constellation, Modulation, Symmetry};
use cam_core::estimation::{center_signal, estimate_c42_frame, frame_series, normalize_c42, FrameParams};
use cam_core::harness::{run_trials, AccuracyRecord, ModulationPlan};
use cam_core::netsim::{synthesize_scenario, ScenarioConfig};
use common::{mean_var, raw_c42_frames, rng, symbols};
use num_complex::Complex64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within_budget(elapsed: Duration, budget: Duration) -> bool {
    elapsed <= budget
}

// 1 -------------------------------------------------------------------------

const TABLE_C42: [(&str, f64); 17] = [
    ("BPSK", -2.0000),
    ("PAM(4)", -1.3600),
    ("PAM(8)", -1.2381),
    ("PAM(16)", -1.2094),
    ("PAM(32)", -1.2024),
    ("PAM(64)", -1.2006),
    ("PAM(inf)", -1.2000),
    ("PSK(>=4)", -1.0000),
    ("V32", -0.6900),
    ("V29", -0.5816),
    ("QAM(4,4)", -0.6800),
    ("QAM(8,8)", -0.6191),
    ("QAM(16,16)", -0.6047),
    ("QAM(32,32)", -0.6012),
    ("QAM(inf)", -0.6000),
    ("BPSK-OFDM", 0.0),
    ("QPSK-OFDM", 0.0),
];

const TABLE_JVAR: [(&str, f64); 5] = [("BPSK", 0.00), ("PAM(4)", 10.24), ("PSK(>=4)", 0.00), ("QAM(4,4)", 1.38), ("QAM(16,16)", 1.39)];

fn table_analytic() -> Outcome {
    let rows = reference_table();
    let find = |name: &str| rows.iter().find(|r| r.name == name).unwrap_or_else(|| panic!("row {name}"));
    let mut misses = Vec::new();
    for (name, want) in TABLE_C42 {
        let got = find(name).c42;
        if (got - want).abs() >= 5e-5 {
            misses.push(format!("C42 {name} {got:.6} vs {want:.4}"));
        }
    }
    for (name, want) in TABLE_JVAR {
        let got = find(name).j_var;
        if (got - want).abs() >= 5e-3 {
            misses.push(format!("Jvar {name} {got:.4} vs {want:.2}"));
        }
    }
    let n = TABLE_C42.len() + TABLE_JVAR.len();
    if misses.is_empty() {
        outcome(true, format!("{n}/{n} entries within 4 decimals (C42) / 2 decimals (J var)"))
    } else {
        outcome(false, format!("{}/{n} entries match; off: {}", n - misses.len(), misses.join("; ")))
    }
}

// 2 -------------------------------------------------------------------------

fn table_empirical() -> Outcome {
    let j = 1000;
    let frames = 2000;
    let mut ok = true;
    let mut parts = Vec::new();
    for (s, (name, m)) in [("BPSK", Modulation::Bpsk), ("QPSK", Modulation::Psk(4)), ("PAM4", Modulation::Pam(4)), ("16-QAM", Modulation::Qam(16))]
        .into_iter()
        .enumerate()
    {
        let x = symbols(m, j * frames, 0.0, &mut rng(9000 + s as u64));
        let (_, var) = mean_var(&raw_c42_frames(&x, j));
        let want = noisy_variance(&Constellation::new(m).unwrap().cumulants(), NoisyPowerRatio::NOISELESS, j).unwrap();
        let pass = if want == 0.0 { var <= 0.002 } else { (var - want).abs() <= 0.15 * want };
        ok &= pass;
        parts.push(format!("{name} {var:.3e}/{want:.3e}"));
    }
    outcome(ok, format!("raw C42 frame var empirical/analytic: {}", parts.join(", ")))
}

// 3 -------------------------------------------------------------------------

fn normalized_frames(cfg: ScenarioConfig) -> Vec<f64> {
    let s = synthesize_scenario(&cfg).unwrap();
    frame_series(&s.samples, &FrameParams { frame_length: cfg.j, frames: cfg.f, noise_variance: 0.0, squelch: None }).unwrap().values
}

fn ofdm_cdma_statistics() -> Outcome {
    let base = ScenarioConfig { snr_db: f64::INFINITY, fading: false, squelch: None, j: 500, f: 2000, seed: 77, ..Default::default() };
    let ofdm = normalized_frames(ScenarioConfig { method: AccessMethod::Ofdma, n_total: 4, n_sc: 64, modulation: Modulation::Qam(4), ..base.clone() });
    let (om, ov) = mean_var(&ofdm);
    let ojv = ov * 500.0;
    let cdma = normalized_frames(ScenarioConfig { method: AccessMethod::Cdma, n_total: 16, modulation: Modulation::Bpsk, ..base });
    let (cm, _) = mean_var(&cdma);
    let pass = om.abs() <= 0.05 && (ojv - 4.0).abs() <= 0.2 * 4.0 && (cm + 0.125).abs() <= 0.03;
    outcome(pass, format!("QPSK-OFDM mean {om:.4} (|.|<=0.05), J var {ojv:.3} (4 +-20%); CDMA-16 mean {cm:.4} (-0.125 +-0.03)"))
}

// 4 -------------------------------------------------------------------------

fn stage2_calibration() -> Outcome {
    let cfg = ScenarioConfig { modulation: Modulation::Psk(4), snr_db: 10.0, j: 500, f: 200, p_c_given_t: 0.05, ..Default::default() };
    let r = run_trials(&cfg, ModulationPlan::Fixed, 1000, 4004).unwrap();
    outcome(r.flag_rate <= 0.08, format!("TDMA-QPSK 10 dB false-alarm rate {:.4} over {} trials (<= 0.08)", r.flag_rate, r.n_trials))
}

// 5 -------------------------------------------------------------------------

fn accuracy(cfg: &ScenarioConfig, trials: usize, seed: u64) -> AccuracyRecord {
    run_trials(cfg, ModulationPlan::ClassAverage, trials, seed).unwrap()
}

fn accuracy_points() -> Outcome {
    let tdma = |snr| ScenarioConfig { method: AccessMethod::Tdma, n_total: 4, snr_db: snr, load_g: 1.0, j: 500, f: 200, ..Default::default() };
    let cont = |load| ScenarioConfig { method: AccessMethod::Contention, n_total: 4, snr_db: 10.0, load_g: load, j: 500, f: 200, ..Default::default() };
    let t10 = accuracy(&tdma(10.0), 500, 5001).p_correct;
    let c10 = accuracy(&cont(1.0), 500, 5002).p_correct;
    // bounds are inclusive; the slack only absorbs f64 representation error (1.0 - 0.95 > 0.05)
    let points = (t10 - 0.977).abs() <= 0.03 + 1e-12 && (c10 - 0.95).abs() <= 0.05 + 1e-12;
    let mut detail = format!("TDMA 10 dB load 1: {t10:.3} (0.977 +-0.03); contention 10 dB load 1: {c10:.3} (0.95 +-0.05)");
    if points {
        return outcome(true, detail);
    }
    let t: Vec<f64> = [0.0, 4.0, 10.0].iter().enumerate().map(|(k, &s)| accuracy(&tdma(s), 500, 5100 + k as u64).p_correct).collect();
    let c: Vec<f64> = [0.1, 0.5, 1.0].iter().enumerate().map(|(k, &g)| accuracy(&cont(g), 500, 5200 + k as u64).p_correct).collect();
    let inc = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
    detail += &format!("; fallback: TDMA over 0/4/10 dB {t:.3?}, contention over load 0.1/0.5/1 {c:.3?} (strictly increasing)");
    outcome(inc(&t) && inc(&c), detail)
}

// 6 -------------------------------------------------------------------------

fn frame_count_trend() -> Outcome {
    let trials = 300;
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (m, n)) in [(AccessMethod::Tdma, 4), (AccessMethod::Ofdma, 4), (AccessMethod::Cdma, 16), (AccessMethod::Contention, 4)].into_iter().enumerate() {
        let cfg = |f| ScenarioConfig { method: m, n_total: n, n_sc: 64, snr_db: 5.0, load_g: 0.5, j: 500, f, ..Default::default() };
        let a10 = accuracy(&cfg(10), trials, 6000 + 2 * k as u64).p_correct;
        let a300 = accuracy(&cfg(300), trials, 6001 + 2 * k as u64).p_correct;
        ok &= a300 > a10;
        if m == AccessMethod::Cdma {
            ok &= a300 - a10 >= 0.3;
        }
        parts.push(format!("{m} {a10:.3}->{a300:.3}"));
    }
    outcome(ok, format!("F=10 -> F=300: {} (all rising; CDMA gain >= 0.3)", parts.join(", ")))
}

// 7 -------------------------------------------------------------------------

fn formula_consistency() -> Outcome {
    let mods: Vec<Modulation> = [Modulation::Bpsk, Modulation::V29, Modulation::V32]
        .into_iter()
        .chain([4, 8, 16, 32, 64].map(Modulation::Psk))
        .chain([4, 8, 16, 32, 64].map(Modulation::Pam))
        .chain([4, 16, 64, 256, 1024].map(Modulation::Qam))
        .collect();
    let mut eq_gap: f64 = 0.0;
    let mut rt_gap: f64 = 0.0;
    let mut fade_gap: f64 = 0.0;
    for (s, &m) in mods.iter().enumerate() {
        let c = Constellation::new(m).unwrap();
        let cum = c.cumulants();
        for rho in [1.0, 1.1, 1.5, 2.0, 4.0, 10.0] {
            let r = NoisyPowerRatio::new(rho).unwrap();
            let general = noisy_variance_general(&cum, r, 1).unwrap();
            let special = match c.symmetry() {
                Symmetry::Real => noisy_variance_real(&cum, r, 1).unwrap(),
                Symmetry::FourFold => noisy_variance_fourfold(&cum, r, 1).unwrap(),
                Symmetry::None => f64::INFINITY,
            };
            eq_gap = eq_gap.max((general - special).abs());
        }
        let mom = c.moments();
        let back = cumulants_to_moments(&moments_to_cumulants(&mom));
        for (a, b) in [(mom.m20, back.m20), (mom.m21, back.m21), (mom.m40, back.m40), (mom.m42, back.m42), (mom.m63, back.m63), (mom.m84, back.m84)] {
            rt_gap = rt_gap.max((a - b).norm());
        }
        let x = symbols(m, 500, 0.0, &mut rng(7000 + s as u64));
        for h in [Complex64::new(0.03, 0.2), Complex64::new(-3.0, 7.0), Complex64::from_polar(55.0, 1.0)] {
            let y: Vec<Complex64> = x.iter().map(|v| v * h).collect();
            let n = |z: &[Complex64]| {
                let f = estimate_c42_frame(&center_signal(z).unwrap()).unwrap();
                normalize_c42(f.c42, f.c21, 0.0).unwrap()
            };
            fade_gap = fade_gap.max((n(&x) - n(&y)).abs());
        }
    }
    let mut chi_gap: f64 = 0.0;
    for dof in [1u32, 2, 10, 200, 300] {
        for p in [0.01, 0.05, 0.5, 0.95, 0.99] {
            chi_gap = chi_gap.max((chi_square_cdf(chi_square_quantile(p, dof).unwrap(), dof) - p).abs());
        }
    }
    let pass = eq_gap <= 1e-9 && rt_gap <= 1e-10 && chi_gap <= 1e-8 && fade_gap <= 1e-9;
    outcome(
        pass,
        format!("general vs specialized {eq_gap:.1e} (<=1e-9); round-trip {rt_gap:.1e} (<=1e-10); chi2 residual {chi_gap:.1e} (<=1e-8); fading {fade_gap:.1e} (<=1e-9)"),
    )
}

// 8 -------------------------------------------------------------------------

fn psk_regression() -> Outcome {
    let row = reference_table().into_iter().find(|r| r.name == "PSK(>=4)").unwrap();
    let models = class_models(16).unwrap();
    let m2 = models[1].j_var(NoisyPowerRatio::NOISELESS);
    let pass = row.j_var.abs() < 5e-3 && (row.j_var - 12.0).abs() > 1.0 && m2.abs() < 5e-3;
    outcome(pass, format!("PSK(>=4) noiseless J var {:.2} (legacy 12.00); class M2 {:.2}", row.j_var.abs(), m2.abs()))
}

// ---------------------------------------------------------------------------

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 8] = [
        (1, "reference table analytic", Duration::from_secs(1), table_analytic),
        (2, "reference table empirical", Duration::from_secs(60), table_empirical),
        (3, "OFDM/CDMA statistics", Duration::from_secs(60), ofdm_cdma_statistics),
        (4, "stage-2 calibration", Duration::from_secs(600), stage2_calibration),
        (5, "accuracy at 10 dB", Duration::from_secs(1800), accuracy_points),
        (6, "frame-count trend", Duration::from_secs(1800), frame_count_trend),
        (7, "formula consistency", Duration::from_secs(10), formula_consistency),
        (8, "PSK legacy regression", Duration::from_secs(1), psk_regression),
    ];
    let mut passed = 0;
    for (k, name, budget, run) in criteria {
        let t = Instant::now();
        let o = run();
        let elapsed = t.elapsed();
        let in_time = within_budget(elapsed, budget);
        let pass = o.pass && in_time;
        passed += pass as usize;
        let timing = if in_time { format!("{:.1}s", elapsed.as_secs_f64()) } else { format!("{:.1}s OVER BUDGET {:?}", elapsed.as_secs_f64(), budget) };
        println!("criterion {k} [{name}]: {} -- {} ({timing})", if pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {passed}/8 criteria pass");
    if passed < 8 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
