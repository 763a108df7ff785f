//! Statistical checks of the link simulator against its closed-form expectation.

use qds_core::channel::*;
use qds_core::finite_key::{DetectionTally, IntensityConfig};

fn cfg() -> IntensityConfig {
    IntensityConfig { mu: 0.5, nu: 0.12, p_mu: 0.8, p_nu: 0.2, p_z: 0.9, p_x: 0.1 }
}

fn model(loss_db: f64) -> ChannelModel {
    ChannelModel {
        loss_db,
        detector_efficiency: 0.7,
        dark_count_prob: 2e-6,
        misalignment: 0.012,
        pulse_rate_hz: 5e7,
        receiver_loss_db: 0.0,
    }
}

fn fields(t: &DetectionTally) -> [f64; 8] {
    [t.n_z_mu, t.n_z_nu, t.m_z_mu, t.m_z_nu, t.n_x_mu, t.n_x_nu, t.m_x_mu, t.m_x_nu].map(|v| v as f64)
}

fn expected_fields(e: &ExpectedCounts) -> [f64; 8] {
    [e.n_z_mu, e.n_z_nu, e.m_z_mu, e.m_z_nu, e.n_x_mu, e.n_x_nu, e.m_x_mu, e.m_x_nu]
}

fn mean_and_se(samples: &[[f64; 8]]) -> ([f64; 8], [f64; 8]) {
    let n = samples.len() as f64;
    let mut mean = [0.0; 8];
    let mut se = [0.0; 8];
    for i in 0..8 {
        mean[i] = samples.iter().map(|s| s[i]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0);
        se[i] = (var / n).sqrt();
    }
    (mean, se)
}

const NAMES: [&str; 8] = ["n_z_mu", "n_z_nu", "m_z_mu", "m_z_nu", "n_x_mu", "n_x_nu", "m_x_mu", "m_x_nu"];

#[test]
fn expectation_matches_twenty_seed_mean() {
    let n = 4_000_000;
    let (cfg, model) = (cfg(), model(12.0));
    let samples: Vec<[f64; 8]> =
        (0..20).map(|s| fields(&simulate_kgp(n, &cfg, &model, 1000 + s).unwrap().tally)).collect();
    let (mean, se) = mean_and_se(&samples);
    let expect = expected_fields(&expected_counts(n, &cfg, &model));
    let rounded = fields(&expected_tally(n, &cfg, &model));
    for i in 0..8 {
        assert!(se[i] > 0.0, "{} never varied", NAMES[i]);
        assert!((mean[i] - expect[i]).abs() <= 3.0 * se[i], "{}: mean {} vs {} (se {})", NAMES[i], mean[i], expect[i], se[i]);
        assert!((rounded[i] - expect[i]).abs() <= 0.5);
    }
}

#[test]
fn skip_sampler_agrees_with_per_pulse() {
    let n = 8_000_000;
    let (cfg, model) = (cfg(), model(25.0));
    let run = |sampler: Sampler, seed: u64| {
        let opts = SimOptions { sampler, workers: None };
        fields(&simulate_kgp_with(n, &cfg, &model, seed, opts).unwrap().tally)
    };
    let per: Vec<_> = (0..12).map(|s| run(Sampler::PerPulse, s)).collect();
    let skip: Vec<_> = (0..12).map(|s| run(Sampler::Skip, 500 + s)).collect();
    let (mp, sp) = mean_and_se(&per);
    let (ms, ss) = mean_and_se(&skip);
    for i in 0..8 {
        let se = (sp[i].powi(2) + ss[i].powi(2)).sqrt();
        assert!((mp[i] - ms[i]).abs() <= 4.0 * se.max(1.0), "{}: {} vs {}", NAMES[i], mp[i], ms[i]);
    }
}

#[test]
fn sifting_ratio() {
    let n = 10_000_000u64;
    let (cfg, model) = (cfg(), model(15.0));
    let batch = simulate_kgp(n, &cfg, &model, 77).unwrap();
    let clicks = cfg.p_mu * click_probability(cfg.mu, &model) + cfg.p_nu * click_probability(cfg.nu, &model);
    let p = cfg.p_z * cfg.p_z * clicks;
    let observed = batch.tally.n_z_total as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((observed - p).abs() <= 4.0 * sigma, "{observed} vs {p}");
    assert_eq!(batch.alice_bits.len() as u64, batch.tally.n_z_total);
    assert_eq!(batch.tally.accumulation_time_s, n as f64 / model.pulse_rate_hz);
}

#[test]
fn error_rate_at_nineteen_db() {
    let n = 100_000_000u64;
    let cfg = cfg();
    // 16.5 dB of fiber plus a 70% detector is about 18 dB; the decoder adds 1 dB
    let model = ChannelModel { loss_db: 16.5, receiver_loss_db: 1.0, ..model(0.0) };
    let total_db = model.loss_db + model.receiver_loss_db - 10.0 * model.detector_efficiency.log10();
    assert!((total_db - 19.05).abs() < 0.1);
    let batch = simulate_kgp(n, &cfg, &model, 19).unwrap();
    let weight = |k: f64, p: f64| p * click_probability(k, &model);
    let (w_mu, w_nu) = (weight(cfg.mu, cfg.p_mu), weight(cfg.nu, cfg.p_nu));
    let configured =
        (w_mu * error_probability(cfg.mu, &model) + w_nu * error_probability(cfg.nu, &model)) / (w_mu + w_nu);
    let e_z = batch.tally.e_z();
    assert!((e_z - configured).abs() <= 0.003, "{e_z} vs {configured}");
    let disagreements = batch.alice_bits.hamming_distance(&batch.sender_bits) as u64;
    assert_eq!(disagreements, batch.tally.m_z_mu + batch.tally.m_z_nu);
    assert_eq!(batch.decoy_mask.count_ones() as u64, batch.tally.n_z_nu);
}

#[test]
fn tally_independent_of_worker_count() {
    let n = 5 * CHUNK_PULSES + 12_345;
    let (cfg, model) = (cfg(), model(8.0));
    for sampler in [Sampler::PerPulse, Sampler::Skip] {
        let run = |w| simulate_kgp_with(n, &cfg, &model, 5, SimOptions { sampler, workers: Some(w) }).unwrap();
        let one = run(1);
        for w in [2, 3, 8] {
            assert_eq!(run(w), one, "{sampler:?} with {w} workers");
        }
        let bytes = serde_json::to_vec(&one).unwrap();
        assert_eq!(serde_json::to_vec(&run(4)).unwrap(), bytes);
    }
    assert_ne!(simulate_kgp(n, &cfg, &model, 6).unwrap(), simulate_kgp(n, &cfg, &model, 5).unwrap());
}
