//! Software stand-in for the photonic links: a weak-coherent-pulse BB84
//! simulator with loss, detector efficiency, dark counts and misalignment.
//!
//! Pulses are processed in fixed chunks of [`CHUNK_PULSES`]; chunk `i` draws
//! from ChaCha8 stream `i` of the master seed. Results are therefore
//! independent of how chunks are spread over worker threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::finite_key::{Basis, DetectionTally, Intensity, IntensityConfig};

pub const CHUNK_PULSES: u64 = 1 << 20;

/// Share of clicks caused by the signal that land on the wrong detector is
/// `misalignment`; dark clicks are uniformly random.
const DARK_ERROR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    pub loss_db: f64,
    pub detector_efficiency: f64,
    pub dark_count_prob: f64,
    pub misalignment: f64,
    pub pulse_rate_hz: f64,
    #[serde(default)]
    pub receiver_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error("invalid channel model: {0}")]
    InvalidModel(String),
    #[error("invalid intensity configuration: {0}")]
    InvalidConfig(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: String| Err(ChannelError::InvalidModel(m));
        for (name, p) in [
            ("detector_efficiency", self.detector_efficiency),
            ("dark_count_prob", self.dark_count_prob),
            ("misalignment", self.misalignment),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name}={p} is not a probability"));
            }
        }
        if self.dark_count_prob > 0.5 {
            return bad(format!("dark_count_prob={} exceeds 0.5", self.dark_count_prob));
        }
        if !(self.loss_db >= 0.0 && self.receiver_loss_db >= 0.0) {
            return bad("loss terms must be >= 0".into());
        }
        if !(self.pulse_rate_hz > 0.0 && self.pulse_rate_hz.is_finite()) {
            return bad(format!("pulse_rate_hz={} must be positive", self.pulse_rate_hz));
        }
        Ok(())
    }

    /// Overall single-photon detection probability η.
    pub fn transmittance(&self) -> f64 {
        self.detector_efficiency * 10f64.powf(-(self.loss_db + self.receiver_loss_db) / 10.0)
    }
}

fn signal_probability(intensity: f64, model: &ChannelModel) -> f64 {
    1.0 - (-intensity * model.transmittance()).exp()
}

/// Probability of at least one click in the measured basis,
/// `1 - (1 - 2 p_dark) exp(-intensity η)`.
pub fn click_probability(intensity: f64, model: &ChannelModel) -> f64 {
    1.0 - (1.0 - 2.0 * model.dark_count_prob) * (-intensity * model.transmittance()).exp()
}

/// Error rate of matched-basis clicks: misalignment on signal clicks, one
/// half on pure dark clicks. Defined as 0.5 when nothing can click.
pub fn error_probability(intensity: f64, model: &ChannelModel) -> f64 {
    let click = click_probability(intensity, model);
    if click <= 0.0 {
        return DARK_ERROR;
    }
    let signal = signal_probability(intensity, model);
    let dark_share = click - signal;
    ((DARK_ERROR * dark_share + model.misalignment * signal) / click).clamp(0.0, 0.5)
}

/// Joint outcome probabilities of one matched-basis pulse under the
/// simulator's detector model, including the double-click term.
#[derive(Debug, Clone, Copy)]
struct PulseOutcome {
    signal_only: f64,
    dark_only: f64,
    both: f64,
}

impl PulseOutcome {
    fn new(intensity: f64, model: &ChannelModel) -> Self {
        let s = signal_probability(intensity, model);
        let d = 2.0 * model.dark_count_prob;
        Self { signal_only: s * (1.0 - d), dark_only: (1.0 - s) * d, both: s * d }
    }

    fn click(&self) -> f64 {
        self.signal_only + self.dark_only + self.both
    }

    /// Expected errors per pulse. With a signal and a dark click on the same
    /// detector the event is a single click; on opposite detectors it is a
    /// double click and the bit is random.
    fn errors(&self, misalignment: f64) -> f64 {
        self.signal_only * misalignment + self.dark_only * DARK_ERROR + self.both * (0.5 * misalignment + 0.25)
    }
}

/// Z-basis sifted raw keys of one link plus the tally of all sifted events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiftedBatch {
    pub tally: DetectionTally,
    /// Alice's measured Z-basis bits.
    pub alice_bits: BitString,
    /// The sender's (Bob's or Charlie's) Z-basis bits.
    pub sender_bits: BitString,
    /// Set where the key bit came from a decoy pulse.
    pub decoy_mask: BitString,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Every pulse is drawn individually.
    #[default]
    PerPulse,
    /// Jumps between clicks with geometric gaps, then samples the clicked
    /// pulse conditionally. Same distribution, far fewer draws at high loss.
    Skip,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub sampler: Sampler,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

#[derive(Default)]
struct ChunkResult {
    tally: DetectionTally,
    alice: BitString,
    sender: BitString,
    decoy: BitString,
}

struct PulseModel {
    cfg: IntensityConfig,
    misalignment: f64,
    /// Per-pulse probability of any dark click in the measured basis.
    dark: f64,
    s_mu: f64,
    s_nu: f64,
    signal: PulseOutcome,
    decoy: PulseOutcome,
}

impl PulseModel {
    fn outcome(&self, k: Intensity) -> &PulseOutcome {
        match k {
            Intensity::Signal => &self.signal,
            Intensity::Decoy => &self.decoy,
        }
    }
}

#[derive(Clone, Copy)]
enum ClickKind {
    SignalOnly,
    DarkOnly,
    Both,
}

impl ChunkResult {
    /// Completes a pulse that produced a click, drawing bases and bits.
    fn record<R: Rng>(&mut self, rng: &mut R, m: &PulseModel, k: Intensity, kind: ClickKind) {
        let sender_z = rng.gen_bool(m.cfg.p_z);
        let receiver_z = rng.gen_bool(m.cfg.p_z);
        if sender_z != receiver_z {
            return;
        }
        let bit: bool = rng.gen();
        // detector index relative to the sender's bit: false = correct detector
        let measured_error = match kind {
            ClickKind::SignalOnly => rng.gen_bool(m.misalignment),
            ClickKind::DarkOnly => rng.gen(),
            ClickKind::Both => {
                let signal_wrong = rng.gen_bool(m.misalignment);
                let dark_wrong: bool = rng.gen();
                if signal_wrong == dark_wrong {
                    signal_wrong
                } else {
                    // double click: random assignment
                    rng.gen()
                }
            }
        };
        let basis = if sender_z { Basis::Z } else { Basis::X };
        let t = &mut self.tally;
        let (n, e) = match (basis, k) {
            (Basis::Z, Intensity::Signal) => (&mut t.n_z_mu, &mut t.m_z_mu),
            (Basis::Z, Intensity::Decoy) => (&mut t.n_z_nu, &mut t.m_z_nu),
            (Basis::X, Intensity::Signal) => (&mut t.n_x_mu, &mut t.m_x_mu),
            (Basis::X, Intensity::Decoy) => (&mut t.n_x_nu, &mut t.m_x_nu),
        };
        *n += 1;
        if measured_error {
            *e += 1;
        }
        if basis == Basis::Z {
            t.n_z_total += 1;
            self.sender.push(bit);
            self.alice.push(bit ^ measured_error);
            self.decoy.push(k == Intensity::Decoy);
        }
    }
}

fn draw_intensity<R: Rng>(rng: &mut R, p_mu: f64) -> Intensity {
    if rng.gen_bool(p_mu) {
        Intensity::Signal
    } else {
        Intensity::Decoy
    }
}

fn run_chunk_per_pulse(m: &PulseModel, pulses: u64, rng: &mut ChaCha8Rng) -> ChunkResult {
    let mut out = ChunkResult::default();
    for _ in 0..pulses {
        let k = draw_intensity(rng, m.cfg.p_mu);
        let s = if k == Intensity::Signal { m.s_mu } else { m.s_nu };
        let signal = rng.gen::<f64>() < s;
        let dark_click = rng.gen::<f64>() < m.dark;
        let kind = match (signal, dark_click) {
            (false, false) => continue,
            (true, false) => ClickKind::SignalOnly,
            (false, true) => ClickKind::DarkOnly,
            (true, true) => ClickKind::Both,
        };
        out.record(rng, m, k, kind);
    }
    out
}

fn run_chunk_skip(m: &PulseModel, pulses: u64, rng: &mut ChaCha8Rng) -> ChunkResult {
    let mut out = ChunkResult::default();
    let c_mu = m.cfg.p_mu * m.signal.click();
    let c_nu = (1.0 - m.cfg.p_mu) * m.decoy.click();
    let p = c_mu + c_nu;
    if p <= 0.0 {
        return out;
    }
    let log_q = (1.0 - p).ln();
    let mut pos: u64 = 0;
    loop {
        // pulses before the next click: Geometric(p) on {0, 1, ...}
        let gap = if p >= 1.0 {
            0
        } else {
            let u: f64 = 1.0 - rng.gen::<f64>();
            (u.ln() / log_q).floor() as u64
        };
        pos = pos.saturating_add(gap);
        if pos >= pulses {
            break;
        }
        pos += 1;
        let k = if rng.gen::<f64>() * p < c_mu { Intensity::Signal } else { Intensity::Decoy };
        let o = m.outcome(k);
        let u = rng.gen::<f64>() * o.click();
        let kind = if u < o.signal_only {
            ClickKind::SignalOnly
        } else if u < o.signal_only + o.dark_only {
            ClickKind::DarkOnly
        } else {
            ClickKind::Both
        };
        out.record(rng, m, k, kind);
    }
    out
}

fn validate_cfg(cfg: &IntensityConfig) -> Result<(), ChannelError> {
    cfg.validate().map_err(|e| ChannelError::InvalidConfig(e.to_string()))
}

/// Simulates `n_pulses` pulses of one link with default options.
pub fn simulate_kgp(n_pulses: u64, cfg: &IntensityConfig, model: &ChannelModel, seed: u64) -> Result<SiftedBatch, ChannelError> {
    simulate_kgp_with(n_pulses, cfg, model, seed, SimOptions::default())
}

pub fn simulate_kgp_with(
    n_pulses: u64,
    cfg: &IntensityConfig,
    model: &ChannelModel,
    seed: u64,
    options: SimOptions,
) -> Result<SiftedBatch, ChannelError> {
    validate_cfg(cfg)?;
    model.validate()?;
    let pm = PulseModel {
        cfg: *cfg,
        misalignment: model.misalignment,
        dark: 2.0 * model.dark_count_prob,
        s_mu: signal_probability(cfg.mu, model),
        s_nu: signal_probability(cfg.nu, model),
        signal: PulseOutcome::new(cfg.mu, model),
        decoy: PulseOutcome::new(cfg.nu, model),
    };
    let chunks = n_pulses.div_ceil(CHUNK_PULSES);
    let run = |i: u64| {
        let pulses = CHUNK_PULSES.min(n_pulses - i * CHUNK_PULSES);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i);
        match options.sampler {
            Sampler::PerPulse => run_chunk_per_pulse(&pm, pulses, &mut rng),
            Sampler::Skip => run_chunk_skip(&pm, pulses, &mut rng),
        }
    };
    let results: Vec<ChunkResult> = match options.workers {
        None => (0..chunks).into_par_iter().map(run).collect(),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| ChannelError::Pool(e.to_string()))?
            .install(|| (0..chunks).into_par_iter().map(run).collect()),
    };
    let mut tally = DetectionTally::default();
    let n_sifted: usize = results.iter().map(|r| r.alice.len()).sum();
    let mut alice = Vec::with_capacity(n_sifted);
    let mut sender = Vec::with_capacity(n_sifted);
    let mut decoy = Vec::with_capacity(n_sifted);
    for r in &results {
        tally.merge(&r.tally);
        alice.extend(r.alice.iter());
        sender.extend(r.sender.iter());
        decoy.extend(r.decoy.iter());
    }
    tally.accumulation_time_s = n_pulses as f64 / model.pulse_rate_hz;
    Ok(SiftedBatch {
        tally,
        alice_bits: BitString::from_bools(alice),
        sender_bits: BitString::from_bools(sender),
        decoy_mask: BitString::from_bools(decoy),
        rng_seed: seed,
    })
}

/// Unrounded expectation of every tally field.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExpectedCounts {
    pub n_z_mu: f64,
    pub n_z_nu: f64,
    pub m_z_mu: f64,
    pub m_z_nu: f64,
    pub n_x_mu: f64,
    pub n_x_nu: f64,
    pub m_x_mu: f64,
    pub m_x_nu: f64,
}

pub fn expected_counts(n_pulses: u64, cfg: &IntensityConfig, model: &ChannelModel) -> ExpectedCounts {
    let n = n_pulses as f64;
    let per = |k: f64, p_k: f64, p_b: f64| {
        let o = PulseOutcome::new(k, model);
        let base = n * p_k * p_b * p_b;
        (base * o.click(), base * o.errors(model.misalignment))
    };
    let (n_z_mu, m_z_mu) = per(cfg.mu, cfg.p_mu, cfg.p_z);
    let (n_z_nu, m_z_nu) = per(cfg.nu, cfg.p_nu, cfg.p_z);
    let (n_x_mu, m_x_mu) = per(cfg.mu, cfg.p_mu, cfg.p_x);
    let (n_x_nu, m_x_nu) = per(cfg.nu, cfg.p_nu, cfg.p_x);
    ExpectedCounts { n_z_mu, n_z_nu, m_z_mu, m_z_nu, n_x_mu, n_x_nu, m_x_mu, m_x_nu }
}

/// Expected tally of [`simulate_kgp`], counts rounded to the nearest integer.
pub fn expected_tally(n_pulses: u64, cfg: &IntensityConfig, model: &ChannelModel) -> DetectionTally {
    let e = expected_counts(n_pulses, cfg, model);
    let r = |v: f64| v.round() as u64;
    let mut t = DetectionTally {
        n_z_mu: r(e.n_z_mu),
        n_z_nu: r(e.n_z_nu),
        m_z_mu: r(e.m_z_mu),
        m_z_nu: r(e.m_z_nu),
        n_x_mu: r(e.n_x_mu),
        n_x_nu: r(e.n_x_nu),
        m_x_mu: r(e.m_x_mu),
        m_x_nu: r(e.m_x_nu),
        n_z_total: 0,
        accumulation_time_s: n_pulses as f64 / model.pulse_rate_hz,
    };
    t.n_z_total = t.n_z_mu + t.n_z_nu;
    t
}
