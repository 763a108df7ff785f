//! Finite-key analysis: published link data, frozen values from an
//! independent floating-point evaluation, and estimator properties.

use proptest::prelude::*;
use qds_core::finite_key::*;

struct Row {
    name: &'static str,
    cfg: IntensityConfig,
    tally: DetectionTally,
    s_z1_l: f64,
    e_z_percent: f64,
    phi_z_u: f64,
    lambda_ec: f64,
    len_bits: u64,
    eps: f64,
}

#[allow(clippy::too_many_arguments)]
fn row(
    name: &'static str,
    p: [f64; 6],
    c: [u64; 8],
    t: f64,
    s_z1_l: f64,
    e_z_percent: f64,
    phi_z_u: f64,
    lambda_ec: f64,
    len_bits: u64,
    eps: f64,
) -> Row {
    let [mu, nu, p_mu, p_nu, p_z, p_x] = p;
    let [n_z_mu, m_z_mu, n_x_mu, m_x_mu, n_z_nu, m_z_nu, n_x_nu, m_x_nu] = c;
    Row {
        name,
        cfg: IntensityConfig { mu, nu, p_mu, p_nu, p_z, p_x },
        tally: DetectionTally {
            n_z_mu,
            n_z_nu,
            m_z_mu,
            m_z_nu,
            n_x_mu,
            n_x_nu,
            m_x_mu,
            m_x_nu,
            n_z_total: n_z_mu + n_z_nu,
            accumulation_time_s: t,
        },
        s_z1_l,
        e_z_percent,
        phi_z_u,
        lambda_ec,
        len_bits,
        eps,
    }
}

fn rows() -> Vec<Row> {
    vec![
        row("50AB", [0.601, 0.147, 0.807, 0.193, 0.947, 0.053], [9449854, 51823, 516479, 2387, 550146, 4781, 27760, 251], 74.8, 4878658.0, 0.566, 0.0210, 581997.0, 698, 4.65e-8),
        row("50AC", [0.481, 0.127, 0.775, 0.225, 0.935, 0.065], [9280871, 130700, 561044, 8154, 719129, 12469, 44603, 1069], 105.4, 5605116.0, 1.432, 0.0353, 1188112.0, 844, 4.56e-8),
        row("100AB", [0.599, 0.147, 0.807, 0.193, 0.948, 0.052], [9448344, 54494, 511670, 3523, 551656, 6631, 28700, 324], 662.6, 4849083.0, 0.611, 0.0270, 595119.0, 735, 4.78e-8),
        row("100AC", [0.479, 0.127, 0.775, 0.225, 0.935, 0.065], [9279475, 119659, 597173, 5052, 720525, 13943, 39847, 536], 981.7, 5642925.0, 1.336, 0.0312, 1136046.0, 783, 4.64e-8),
        row("150AB", [0.597, 0.146, 0.808, 0.192, 0.947, 0.053], [9449307, 63862, 525201, 1935, 550693, 7326, 28411, 224], 6686.3, 4872943.0, 0.712, 0.0156, 681965.0, 718, 4.61e-8),
        row("150AC", [0.478, 0.127, 0.773, 0.227, 0.934, 0.066], [9279885, 95510, 598243, 8926, 720115, 13063, 44413, 984], 9775.2, 5546132.0, 1.086, 0.0436, 967145.0, 812, 4.78e-8),
        row("200AB", [0.593, 0.144, 0.798, 0.202, 0.935, 0.065], [9411383, 92289, 638373, 6601, 588617, 18264, 40011, 1268], 79799.4, 4722076.0, 1.106, 0.0262, 965191.0, 922, 4.77e-8),
        row("200AC", [0.472, 0.123, 0.768, 0.233, 0.918, 0.082], [9240824, 186323, 810524, 14213, 759176, 31614, 72330, 3316], 117291.2, 5553558.0, 2.179, 0.0256, 1726908.0, 1029, 4.72e-8),
    ]
}

fn targets(r: &Row) -> SecurityTargets {
    SecurityTargets { lambda_ec_bits: Some(r.lambda_ec), ..SecurityTargets::new(r.eps, 1_000_000) }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

/// Values from a from-scratch double-precision evaluation of the same
/// bounds: (s_z1_l, phi_z_u, s_z0_u, s_x1_l, v_x1_u, L at step 8).
const FROZEN: [(&str, f64, f64, f64, f64, f64, u64); 8] = [
    ("50AB", 4869714.746881739, 0.02098284405518122, 62315.48492781687, 180150.5459640482, 3408.3198530248005, 688),
    ("50AC", 5644661.362253302, 0.03573507139455959, 115462.35880464528, 299114.6627320651, 10072.69745462141, 808),
    ("100AB", 4822355.420730188, 0.028055756648383084, 76151.43255593473, 192765.22208944787, 4966.659231454173, 736),
    ("100AC", 5602132.280900795, 0.03235635491226903, 125386.05884495651, 231610.65806906213, 6977.480027812378, 776),
    ("150AB", 4875837.914086856, 0.01619966775589246, 82053.11193090482, 191665.2064676751, 2765.935901014796, 704),
    ("150AC", 5508529.877065802, 0.04503916256803577, 117813.1352491414, 273686.0778352738, 11670.310956213267, 808),
    ("200AB", 4740439.903402121, 0.026068942645310313, 158037.50137619025, 267239.2117248711, 6463.027015209152, 920),
    ("200AC", 5506311.596521922, 0.0259047416364392, 242231.25944967553, 490727.5739845492, 12027.300897037521, 1056),
];

#[test]
fn link_rows_match_frozen_evaluation() {
    for (r, f) in rows().iter().zip(FROZEN) {
        assert_eq!(r.name, f.0);
        let link = LinkBounds::new(&r.tally, &r.cfg, &targets(r)).unwrap();
        assert!(rel(link.phase.s_z1_l, f.1) < 1e-9, "{} s_z1_l {}", r.name, link.phase.s_z1_l);
        assert!(rel(link.phase.phi_z_u, f.2) < 1e-9, "{} phi {}", r.name, link.phase.phi_z_u);
        assert!(rel(link.s_z0_u, f.3) < 1e-9, "{} s_z0_u {}", r.name, link.s_z0_u);
        assert!(rel(link.phase.s_x1_l, f.4) < 1e-9, "{} s_x1_l", r.name);
        assert!(rel(link.phase.v_x1_u, f.5) < 1e-9, "{} v_x1_u", r.name);
        assert_eq!(link.s_z0_l, 0.0, "{}", r.name);
        let (len, _) = min_signature_length(&r.tally, &r.cfg, &targets(r)).unwrap();
        assert_eq!(len, f.6, "{}", r.name);
    }
}

#[test]
fn link_rows_within_published_tolerances() {
    for r in rows() {
        let t = targets(&r);
        let link = LinkBounds::new(&r.tally, &r.cfg, &t).unwrap();
        let e_z = (r.tally.m_z_mu + r.tally.m_z_nu) as f64 / (r.tally.n_z_mu + r.tally.n_z_nu) as f64;
        assert_eq!(link.e_z, e_z);
        assert!((100.0 * link.e_z - r.e_z_percent).abs() < 5e-4, "{} E_Z", r.name);
        assert!(rel(link.phase.s_z1_l, r.s_z1_l) <= 0.02, "{} s_z1_l", r.name);
        assert!(rel(link.phase.phi_z_u, r.phi_z_u) <= 0.15, "{} phi", r.name);
        let (len, report) = min_signature_length(&r.tally, &r.cfg, &t).unwrap();
        let lo = ((r.len_bits as f64 * 0.9) / 8.0).floor() as u64 * 8;
        let hi = ((r.len_bits as f64 * 1.1) / 8.0).ceil() as u64 * 8;
        assert!((lo..=hi).contains(&len), "{} L={len} outside [{lo}, {hi}]", r.name);
        assert!(report.eps <= r.eps && report.eps * 3.0 >= r.eps, "{} eps {}", r.name, report.eps);
    }
}

#[test]
fn sampling_correction_frozen() {
    let g = gamma_upper(783.0, 1e7 - 783.0, 1e-10, 0.5643);
    assert!(rel(g, 0.10494443218547232) < 1e-12, "{g}");
}

#[test]
fn hundred_km_ac_chain_at_published_length() {
    let r = &rows()[3];
    let t = targets(r);
    let link = LinkBounds::new(&r.tally, &r.cfg, &t).unwrap();
    let eval = link.evaluate(783, &t).unwrap();
    // 783 (0.5602 - gamma) with gamma ~ 0.105
    assert!((eval.substring.s_z1_l - 356.5).abs() < 5.0, "{}", eval.substring.s_z1_l);
    assert!((eval.h_min - 43.92).abs() < 0.01, "{}", eval.h_min);
    assert!((eval.h_min - 42.0).abs() <= 5.0);
    // back out the tabulated epsilon: m / (8 2^{H-1}) = 4.64e-8 gives H ~ 42.3
    let implied = (1e6f64 / 4.64e-8 / 4.0).log2();
    assert!((implied - 42.3).abs() < 0.1);
    assert!((eval.h_min - implied).abs() <= 5.0);
}

#[test]
fn rate_examples() {
    assert!((signature_rate(1e7, 783.0, 981.7).unwrap() - 6.50).abs() < 0.005);
    assert!((signature_rate(1e7, 1029.0, 117291.2).unwrap() - 4.14e-2).abs() < 5e-5);
    assert_eq!(signature_rate(1e7, 783.0, 200.0).unwrap(), 2.0 * signature_rate(1e7, 783.0, 400.0).unwrap());
    assert!(signature_rate(1e7, 0.0, 1.0).is_err());
}

#[test]
fn empty_tally_is_insecure() {
    let cfg = rows()[0].cfg;
    let r = min_signature_length(&DetectionTally::default(), &cfg, &SecurityTargets::new(1e-7, 1_000_000));
    assert!(matches!(r, Err(FiniteKeyError::LinkInsecure { .. })), "{r:?}");
}

#[test]
fn conventions_shift_the_bounds() {
    let r = &rows()[3];
    let t = targets(r);
    let natural = LinkBounds::new(&r.tally, &r.cfg, &t).unwrap();
    let base2 = LinkBounds::with_conventions(
        &r.tally,
        &r.cfg,
        &t,
        Conventions { log_base: LogBase::Two, ..Conventions::default() },
    )
    .unwrap();
    // log2 exceeds ln for arguments > 1, so every fluctuation term widens
    assert!(base2.phase.s_z1_l < natural.phase.s_z1_l);
    assert!(base2.phase.phi_z_u > natural.phase.phi_z_u);
    let signal = LinkBounds::with_conventions(
        &r.tally,
        &r.cfg,
        &t,
        Conventions { vacuum_upper_intensity: Intensity::Signal, ..Conventions::default() },
    )
    .unwrap();
    assert_ne!(signal.s_z0_u, natural.s_z0_u);
}

/// Expected tallies of a decoy-state link with transmittance `eta`,
/// background yield `y0` and misalignment `e_mis`, over `n` pulses.
fn tally_strategy() -> impl Strategy<Value = (DetectionTally, IntensityConfig)> {
    (9.0f64..11.0, -4.0f64..-1.0, -8.0f64..-5.0, 0.005f64..0.03, 0.35f64..0.7, 0.1f64..0.4, 0.6f64..0.9, 0.8f64..0.97)
        .prop_map(|(log_n, log_eta, log_y0, e_mis, mu, nu_ratio, p_mu, p_z)| {
            let (n, eta, y0) = (10f64.powf(log_n), 10f64.powf(log_eta), 10f64.powf(log_y0));
            let cfg = IntensityConfig { mu, nu: mu * nu_ratio, p_mu, p_nu: 1.0 - p_mu, p_z, p_x: 1.0 - p_z };
            let gain = |k: f64| 1.0 - (-eta * k).exp() + y0;
            let errs = |k: f64| e_mis * (1.0 - (-eta * k).exp()) + y0 / 2.0;
            let count = |pk: f64, pb: f64, q: f64| (n * pk * pb * pb * q).round() as u64;
            let (pz, px) = (cfg.p_z, cfg.p_x);
            let tally = DetectionTally {
                n_z_mu: count(cfg.p_mu, pz, gain(cfg.mu)),
                n_z_nu: count(cfg.p_nu, pz, gain(cfg.nu)),
                m_z_mu: count(cfg.p_mu, pz, errs(cfg.mu)),
                m_z_nu: count(cfg.p_nu, pz, errs(cfg.nu)),
                n_x_mu: count(cfg.p_mu, px, gain(cfg.mu)),
                n_x_nu: count(cfg.p_nu, px, gain(cfg.nu)),
                m_x_mu: count(cfg.p_mu, px, errs(cfg.mu)),
                m_x_nu: count(cfg.p_nu, px, errs(cfg.nu)),
                n_z_total: count(cfg.p_mu, pz, gain(cfg.mu)) + count(cfg.p_nu, pz, gain(cfg.nu)),
                accumulation_time_s: n / 1e9,
            };
            (tally, cfg)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weaker_confidence_never_hurts((tally, cfg) in tally_strategy(), e1 in -14f64..-4.0, de in 0.1f64..3.0) {
        let (tight, loose) = (10f64.powf(e1), 10f64.powf(e1 + de));
        let a = single_photon_lower(&tally, &cfg, tight, Basis::Z).unwrap();
        let b = single_photon_lower(&tally, &cfg, loose, Basis::Z).unwrap();
        prop_assert!(b >= a);
        if let (Ok(pa), Ok(pb)) = (phase_error_upper(&tally, &cfg, tight), phase_error_upper(&tally, &cfg, loose)) {
            prop_assert!(pb <= pa + 1e-15, "{} > {}", pb, pa);
        }
    }

    #[test]
    fn vacuum_bounds_ordered((tally, cfg) in tally_strategy(), e in -14f64..-3.0) {
        let eps = 10f64.powf(e);
        let lo = vacuum_lower(&tally, &cfg, eps).unwrap();
        let hi = vacuum_upper(&tally, &cfg, eps).unwrap();
        prop_assert!(lo >= 0.0);
        prop_assert!(hi <= tally.n_z_total as f64);
        prop_assert!(lo <= hi, "{} > {}", lo, hi);
    }

    #[test]
    fn report_fields_clamped((tally, cfg) in tally_strategy(), len_frac in 0.0f64..1.0) {
        let t = SecurityTargets::new(1e-7, 1_000_000);
        let Ok(link) = LinkBounds::new(&tally, &cfg, &t) else { return Ok(()) };
        let n = tally.n_z_total as f64;
        let len = ((len_frac * n / 2.0) as u64 / 8).max(1) * 8;
        let eval = link.evaluate(len, &t).unwrap();
        let rep = link.report(&eval, tally.accumulation_time_s);
        prop_assert!((0.0..=n).contains(&rep.s_z0_l) && (0.0..=n).contains(&rep.s_z1_l) && (0.0..=n).contains(&rep.s_z0_u));
        prop_assert!((0.0..=tally.basis_detections(Basis::X) as f64).contains(&rep.s_x1_l));
        prop_assert!((0.0..=0.5).contains(&rep.phi_z_u));
        let l = len as f64;
        prop_assert!((0.0..=l).contains(&eval.substring.s_z0_l) && (0.0..=l).contains(&eval.substring.s_z1_l));
        prop_assert!(eval.substring.phi_z_l_u >= rep.phi_z_u && eval.substring.phi_z_l_u <= 0.5);
        prop_assert_eq!(rep.eps_rep, 0.0);
        prop_assert!(rep.eps >= rep.eps_rob && rep.eps >= rep.eps_for);
    }

    #[test]
    fn entropy_nonincreasing_in_leakage(s0 in 0.0f64..100.0, s1 in 0.0f64..900.0, phi in 0.0f64..0.5, lec in 0.0f64..1e7, extra in 0.0f64..1e6) {
        let b = SubstringBounds { s_z0_l: s0, s_z1_l: s1, phi_z_l_u: phi };
        prop_assert!(min_entropy(&b, 1000.0, 1e7, lec + extra, 1e-10) <= min_entropy(&b, 1000.0, 1e7, lec, 1e-10));
    }

    #[test]
    fn more_data_never_lowers_entropy((tally, cfg) in tally_strategy(), c in 2u32..20, len_frac in 0.0f64..1.0) {
        let t = SecurityTargets::new(1e-7, 1_000_000);
        let big = tally.scaled(c as f64);
        let (Ok(small_link), Ok(big_link)) = (LinkBounds::new(&tally, &cfg, &t), LinkBounds::new(&big, &cfg, &t)) else {
            return Ok(());
        };
        let len = ((len_frac * 2000.0) as u64 / 8 + 1) * 8;
        prop_assume!(len < tally.n_z_total);
        let hs = small_link.evaluate(len, &t).unwrap().h_min;
        let hb = big_link.evaluate(len, &t).unwrap().h_min;
        prop_assert!(hb >= hs - 1e-9 * hs.abs().max(1.0), "{} < {}", hb, hs);
    }

    #[test]
    fn returned_length_is_minimal((tally, cfg) in tally_strategy(), e in -10f64..-5.0, m in 1u64..10_000_000) {
        let t = SecurityTargets::new(10f64.powf(e), m);
        match min_signature_length(&tally, &cfg, &t) {
            Ok((len, report)) => {
                prop_assert_eq!(len % 8, 0);
                prop_assert!(report.eps <= t.eps_target);
                prop_assert_eq!(report.signature_len_bits, len);
                let link = LinkBounds::new(&tally, &cfg, &t).unwrap();
                let at = link.evaluate(len, &t).unwrap();
                prop_assert!(security_bounds(at.h_min, m, t.eps_cor).eps <= t.eps_target);
                if len > 8 {
                    prop_assert!(link.evaluate(len - 8, &t).unwrap().security.eps > t.eps_target);
                }
            }
            Err(FiniteKeyError::LinkInsecure { best_eps }) => prop_assert!(best_eps > t.eps_target),
            Err(other) => prop_assert!(false, "unexpected {:?}", other),
        }
    }
}

#[test]
fn security_examples() {
    let s = security_bounds(0.0, 1_000_000, 1e-10);
    assert_eq!(s.eps_for, 250_000.0);
    assert_eq!(s.eps_rob, 2e-10);
    let b = SubstringBounds { s_z0_l: 3.0, s_z1_l: 40.0, phi_z_l_u: 0.0 };
    assert_eq!(min_entropy(&b, 100.0, 1e6, 0.0, 2.0), 43.0);
    let b = SubstringBounds { s_z0_l: 0.0, s_z1_l: 40.0, phi_z_l_u: 0.5 };
    assert!(min_entropy(&b, 100.0, 1e6, 5e5, 1e-10) < 0.0);
}
