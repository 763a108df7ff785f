use std::f64::consts::PI;

use super::types::*;
use super::FiniteKeyError;
use crate::binary_entropy;

/// Floor applied to the sampling ratio inside [`gamma_upper`].
pub const LAMBDA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Plus,
    Minus,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Plus => 1.0,
            Direction::Minus => -1.0,
        }
    }
}

/// Probability that the source emits an `n`-photon pulse, `sum_k p_k e^{-k} k^n / n!`.
pub fn tau(n: u32, cfg: &IntensityConfig) -> Result<f64, FiniteKeyError> {
    let poisson = |k: f64| match n {
        0 => Ok((-k).exp()),
        1 => Ok((-k).exp() * k),
        _ => Err(FiniteKeyError::UnsupportedPhotonNumber(n)),
    };
    Ok(cfg.p_mu * poisson(cfg.mu)? + cfg.p_nu * poisson(cfg.nu)?)
}

/// Half-width of the Hoeffding interval for `total` trials, `sqrt(total/2 ln(1/eps))`.
fn hoeffding_width(total: f64, eps_sf: f64, conv: &Conventions) -> f64 {
    (total / 2.0 * conv.log(1.0 / eps_sf)).sqrt()
}

/// Finite-size corrected count `(e^k / p_k) (count ± sqrt(total/2 ln(1/eps_sf)))`.
///
/// With `count` a detection count and `total` the basis detection total this
/// is `n_{λ,k}^±`; with error counts and the basis error total it is `m_{λ,k}^±`.
pub fn hoeffding_shift(
    count: f64,
    total: f64,
    k: Intensity,
    cfg: &IntensityConfig,
    eps_sf: f64,
    direction: Direction,
) -> f64 {
    shift_with(count, total, k, cfg, eps_sf, direction, &Conventions::default())
}

fn shift_with(
    count: f64,
    total: f64,
    k: Intensity,
    cfg: &IntensityConfig,
    eps_sf: f64,
    direction: Direction,
    conv: &Conventions,
) -> f64 {
    let mean = cfg.mean(k);
    mean.exp() / cfg.prob(k) * (count + direction.sign() * hoeffding_width(total, eps_sf, conv))
}

struct Ctx<'a> {
    tally: &'a DetectionTally,
    cfg: &'a IntensityConfig,
    eps_sf: f64,
    conv: &'a Conventions,
}

impl Ctx<'_> {
    fn corrected_detections(&self, basis: Basis, k: Intensity, d: Direction) -> f64 {
        let total = self.tally.basis_detections(basis) as f64;
        shift_with(self.tally.detections(basis, k) as f64, total, k, self.cfg, self.eps_sf, d, self.conv)
    }
}

fn check_intensities(cfg: &IntensityConfig) -> Result<(), FiniteKeyError> {
    if cfg.mu > cfg.nu && cfg.nu > 0.0 {
        Ok(())
    } else {
        Err(FiniteKeyError::InvalidArgument(format!("need mu > nu > 0, got mu={} nu={}", cfg.mu, cfg.nu)))
    }
}

impl Ctx<'_> {
    fn vacuum_lower(&self, basis: Basis) -> Result<f64, FiniteKeyError> {
        let cfg = self.cfg;
        check_intensities(cfg)?;
        let (mu, nu) = (cfg.mu, cfg.nu);
        let n_nu_minus = self.corrected_detections(basis, Intensity::Decoy, Direction::Minus);
        let n_mu_plus = self.corrected_detections(basis, Intensity::Signal, Direction::Plus);
        let bound = tau(0, cfg)? / (mu - nu) * (mu * n_nu_minus - nu * n_mu_plus);
        Ok(bound.max(0.0))
    }

    fn vacuum_upper(&self, basis: Basis) -> Result<f64, FiniteKeyError> {
        let (cfg, tally) = (self.cfg, self.tally);
        check_intensities(cfg)?;
        let n = tally.basis_detections(basis) as f64;
        let m = tally.basis_errors(basis) as f64;
        let k = self.conv.vacuum_upper_intensity;
        let m_k = tally.errors(basis, k) as f64;
        let err_term = tau(0, cfg)? * cfg.mean(k).exp() / cfg.prob(k) * (m_k + hoeffding_width(m, self.eps_sf, self.conv));
        let bound = 2.0 * (err_term + hoeffding_width(n, self.eps_sf, self.conv));
        Ok(bound.min(n))
    }

    fn single_photon_lower(&self, basis: Basis) -> Result<f64, FiniteKeyError> {
        let cfg = self.cfg;
        check_intensities(cfg)?;
        let s0_upper = self.vacuum_upper(basis)?;
        let (mu, nu) = (cfg.mu, cfg.nu);
        let n_nu_minus = self.corrected_detections(basis, Intensity::Decoy, Direction::Minus);
        let n_mu_plus = self.corrected_detections(basis, Intensity::Signal, Direction::Plus);
        let tau0 = tau(0, cfg)?;
        let tau1 = tau(1, cfg)?;
        let ratio = nu * nu / (mu * mu);
        let bound = tau1 * mu / (nu * (mu - nu)) * (n_nu_minus - ratio * n_mu_plus - (1.0 - ratio) * s0_upper / tau0);
        Ok(bound.clamp(0.0, self.tally.basis_detections(basis) as f64))
    }

    fn phase_error_bound(&self) -> Result<PhaseErrorBound, FiniteKeyError> {
        let (cfg, tally, eps_sf) = (self.cfg, self.tally, self.eps_sf);
        let s_z1_l = self.single_photon_lower(Basis::Z)?;
        let s_x1_l = self.single_photon_lower(Basis::X)?;
        if s_x1_l <= 0.0 {
            return Err(FiniteKeyError::InsufficientData(
                "X-basis single-photon lower bound is not positive".into(),
            ));
        }
        let m_x = tally.basis_errors(Basis::X) as f64;
        let m_mu_plus = shift_with(tally.m_x_mu as f64, m_x, Intensity::Signal, cfg, eps_sf, Direction::Plus, self.conv);
        let m_nu_minus = shift_with(tally.m_x_nu as f64, m_x, Intensity::Decoy, cfg, eps_sf, Direction::Minus, self.conv);
        let v_x1_u = (tau(1, cfg)? / (cfg.mu - cfg.nu) * (m_mu_plus - m_nu_minus)).max(0.0);
        let ratio = v_x1_u / s_x1_l;
        let phi = ratio + gamma_with(s_z1_l, s_x1_l, eps_sf, ratio, self.conv);
        Ok(PhaseErrorBound { s_z1_l, s_x1_l, v_x1_u, phi_z_u: phi.clamp(0.0, 0.5) })
    }
}

fn ctx<'a>(tally: &'a DetectionTally, cfg: &'a IntensityConfig, eps_sf: f64, conv: &'a Conventions) -> Ctx<'a> {
    Ctx { tally, cfg, eps_sf, conv }
}

/// Lower bound on Z-basis vacuum detections, clamped at 0.
pub fn vacuum_lower(tally: &DetectionTally, cfg: &IntensityConfig, eps_sf: f64) -> Result<f64, FiniteKeyError> {
    ctx(tally, cfg, eps_sf, &Conventions::default()).vacuum_lower(Basis::Z)
}

/// Upper bound on Z-basis vacuum detections, using the decoy error count,
/// clamped at `n_Z`.
pub fn vacuum_upper(tally: &DetectionTally, cfg: &IntensityConfig, eps_sf: f64) -> Result<f64, FiniteKeyError> {
    ctx(tally, cfg, eps_sf, &Conventions::default()).vacuum_upper(Basis::Z)
}

/// Lower bound on single-photon detections in `basis`, clamped to `[0, n_basis]`.
pub fn single_photon_lower(tally: &DetectionTally, cfg: &IntensityConfig, eps_sf: f64, basis: Basis) -> Result<f64, FiniteKeyError> {
    ctx(tally, cfg, eps_sf, &Conventions::default()).single_photon_lower(basis)
}

/// Upper deviation for random sampling without replacement.
///
/// `n` and `k` are the sizes of the sampled and remaining sets, `lam` the
/// observed ratio in the sample. Returns `+inf` when either set is empty so
/// that the bounds that use it clamp to their worst case.
pub fn gamma_upper(n: f64, k: f64, eps: f64, lam: f64) -> f64 {
    gamma_with(n, k, eps, lam, &Conventions::default())
}

fn gamma_with(n: f64, k: f64, eps: f64, lam: f64, conv: &Conventions) -> f64 {
    if !(n > 0.0 && k > 0.0) {
        return f64::INFINITY;
    }
    let lam = lam.clamp(LAMBDA_FLOOR, 1.0 - LAMBDA_FLOOR);
    let a = n.max(k);
    let sum = n + k;
    let var = lam * (1.0 - lam);
    let g = (sum / (n * k) * conv.log(sum / (2.0 * PI * n * k * var * eps * eps))).max(0.0);
    let numerator = (1.0 - 2.0 * lam) * a * g / sum + (a * a * g * g / (sum * sum) + 4.0 * var * g).sqrt();
    numerator / (2.0 + 2.0 * a * a * g / (sum * sum))
}

/// Intermediate values of the phase-error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorBound {
    pub s_z1_l: f64,
    pub s_x1_l: f64,
    pub v_x1_u: f64,
    pub phi_z_u: f64,
}

pub fn phase_error_bound(tally: &DetectionTally, cfg: &IntensityConfig, eps_sf: f64) -> Result<PhaseErrorBound, FiniteKeyError> {
    ctx(tally, cfg, eps_sf, &Conventions::default()).phase_error_bound()
}

/// Upper bound on the single-photon phase error rate of the Z-basis key, in `[0, 0.5]`.
pub fn phase_error_upper(tally: &DetectionTally, cfg: &IntensityConfig, eps_sf: f64) -> Result<f64, FiniteKeyError> {
    Ok(phase_error_bound(tally, cfg, eps_sf)?.phi_z_u)
}

/// Bounds for one L-bit substring of the `n_z`-bit key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstringBounds {
    pub s_z0_l: f64,
    pub s_z1_l: f64,
    pub phi_z_l_u: f64,
}

pub fn substring_bounds(
    s_z0_l: f64,
    s_z1_l: f64,
    phi_z_u: f64,
    n_z: f64,
    len_bits: f64,
    eps_sf: f64,
) -> Result<SubstringBounds, FiniteKeyError> {
    substring_with(s_z0_l, s_z1_l, phi_z_u, n_z, len_bits, eps_sf, &Conventions::default())
}

fn substring_with(
    s_z0_l: f64,
    s_z1_l: f64,
    phi_z_u: f64,
    n_z: f64,
    len_bits: f64,
    eps_sf: f64,
    conv: &Conventions,
) -> Result<SubstringBounds, FiniteKeyError> {
    if !(len_bits > 0.0 && len_bits < n_z) {
        return Err(FiniteKeyError::InvalidArgument(format!(
            "substring length {len_bits} must lie strictly between 0 and n_z = {n_z}"
        )));
    }
    let rest = n_z - len_bits;
    let sampled = |s: f64| {
        let frac = s / n_z;
        (len_bits * (frac - gamma_with(len_bits, rest, eps_sf, frac, conv))).clamp(0.0, len_bits)
    };
    let s0 = sampled(s_z0_l);
    let s1 = sampled(s_z1_l);
    let phi = if s1 > 0.0 {
        (phi_z_u + gamma_with(s1, s_z1_l - s1, eps_sf, phi_z_u, conv)).clamp(phi_z_u.min(0.5), 0.5)
    } else {
        0.5
    };
    Ok(SubstringBounds { s_z0_l: s0, s_z1_l: s1, phi_z_l_u: phi })
}

/// Min-entropy of an L-bit substring; may be negative.
pub fn min_entropy(bounds: &SubstringBounds, len_bits: f64, n_z: f64, lambda_ec_bits: f64, eps_cor: f64) -> f64 {
    bounds.s_z0_l + bounds.s_z1_l * (1.0 - binary_entropy(bounds.phi_z_l_u))
        - len_bits / n_z * (lambda_ec_bits + (2.0 / eps_cor).log2())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityParameters {
    /// Probability of guessing one L-bit key string, `2^{-H}`.
    pub guess_probability: f64,
    pub eps_rob: f64,
    pub eps_rep: f64,
    pub eps_for: f64,
    pub eps: f64,
}

/// Robustness, repudiation and forgery bounds for min-entropy `h_n` and an
/// `m`-bit message.
pub fn security_bounds(h_n: f64, message_len_bits: u64, eps_cor: f64) -> SecurityParameters {
    let eps_rob = 2.0 * eps_cor;
    let eps_rep = 0.0;
    let guess_probability = (-h_n).exp2();
    // m / (8 * 2^{H-1})
    let eps_for = message_len_bits as f64 / 4.0 * guess_probability;
    SecurityParameters { guess_probability, eps_rob, eps_rep, eps_for, eps: eps_rob.max(eps_rep).max(eps_for) }
}

/// `n_Z / (2 L t)` signatures per second.
pub fn signature_rate(n_z: f64, len_bits: f64, t: f64) -> Result<f64, FiniteKeyError> {
    if !(len_bits > 0.0 && t > 0.0) {
        return Err(FiniteKeyError::InvalidArgument(format!("rate needs L > 0 and t > 0, got L={len_bits} t={t}")));
    }
    if n_z < 0.0 {
        return Err(FiniteKeyError::InvalidArgument(format!("negative n_z {n_z}")));
    }
    Ok(n_z / (2.0 * len_bits * t))
}

/// The length-independent part of the analysis of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBounds {
    pub tau0: f64,
    pub tau1: f64,
    pub s_z0_l: f64,
    pub s_z0_u: f64,
    pub phase: PhaseErrorBound,
    pub e_z: f64,
    pub n_z: f64,
    pub lambda_ec_bits: f64,
    pub conventions: Conventions,
}

/// Everything known about a link at one signature length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthEvaluation {
    pub len_bits: u64,
    pub substring: SubstringBounds,
    pub h_min: f64,
    pub security: SecurityParameters,
}

impl LinkBounds {
    pub fn new(tally: &DetectionTally, cfg: &IntensityConfig, targets: &SecurityTargets) -> Result<Self, FiniteKeyError> {
        Self::with_conventions(tally, cfg, targets, Conventions::default())
    }

    pub fn with_conventions(
        tally: &DetectionTally,
        cfg: &IntensityConfig,
        targets: &SecurityTargets,
        conventions: Conventions,
    ) -> Result<Self, FiniteKeyError> {
        tally.validate()?;
        cfg.validate()?;
        targets.validate()?;
        let c = ctx(tally, cfg, targets.eps_sf, &conventions);
        Ok(Self {
            tau0: tau(0, cfg)?,
            tau1: tau(1, cfg)?,
            s_z0_l: c.vacuum_lower(Basis::Z)?,
            s_z0_u: c.vacuum_upper(Basis::Z)?,
            phase: c.phase_error_bound()?,
            e_z: tally.e_z(),
            n_z: tally.n_z_total as f64,
            lambda_ec_bits: targets.lambda_ec(tally),
            conventions,
        })
    }

    pub fn evaluate(&self, len_bits: u64, targets: &SecurityTargets) -> Result<LengthEvaluation, FiniteKeyError> {
        let l = len_bits as f64;
        let substring =
            substring_with(self.s_z0_l, self.phase.s_z1_l, self.phase.phi_z_u, self.n_z, l, targets.eps_sf, &self.conventions)?;
        let h_min = min_entropy(&substring, l, self.n_z, self.lambda_ec_bits, targets.eps_cor);
        let security = security_bounds(h_min, targets.message_len_bits, targets.eps_cor);
        Ok(LengthEvaluation { len_bits, substring, h_min, security })
    }

    pub fn report(&self, eval: &LengthEvaluation, accumulation_time_s: f64) -> SecurityReport {
        let rate = signature_rate(self.n_z, eval.len_bits as f64, accumulation_time_s).unwrap_or(0.0);
        SecurityReport {
            tau0: self.tau0,
            tau1: self.tau1,
            s_z0_l: self.s_z0_l,
            s_z1_l: self.phase.s_z1_l,
            s_z0_u: self.s_z0_u,
            s_x1_l: self.phase.s_x1_l,
            v_x1_u: self.phase.v_x1_u,
            phi_z_u: self.phase.phi_z_u,
            e_z: self.e_z,
            h_min_per_l: eval.h_min,
            eps_rob: eval.security.eps_rob,
            eps_rep: eval.security.eps_rep,
            eps_for: eval.security.eps_for,
            eps: eval.security.eps,
            signature_len_bits: eval.len_bits,
            signature_rate_tps: rate,
        }
    }
}

/// Step of the signature-length scan; digests are whole GF(256) coefficients.
pub const LENGTH_STEP: u64 = 8;

/// Report for a link at a fixed signature length.
pub fn analyze_at_length(
    tally: &DetectionTally,
    cfg: &IntensityConfig,
    targets: &SecurityTargets,
    len_bits: u64,
) -> Result<SecurityReport, FiniteKeyError> {
    let link = LinkBounds::new(tally, cfg, targets)?;
    let eval = link.evaluate(len_bits, targets)?;
    Ok(link.report(&eval, tally.accumulation_time_s))
}

/// Smallest multiple of 8 in `[8, n_Z / 2]` whose overall ε meets the target.
pub fn min_signature_length(
    tally: &DetectionTally,
    cfg: &IntensityConfig,
    targets: &SecurityTargets,
) -> Result<(u64, SecurityReport), FiniteKeyError> {
    min_signature_length_with(tally, cfg, targets, Conventions::default())
}

pub fn min_signature_length_with(
    tally: &DetectionTally,
    cfg: &IntensityConfig,
    targets: &SecurityTargets,
    conventions: Conventions,
) -> Result<(u64, SecurityReport), FiniteKeyError> {
    let link = match LinkBounds::with_conventions(tally, cfg, targets, conventions) {
        Ok(link) => link,
        Err(FiniteKeyError::InsufficientData(_)) => return Err(FiniteKeyError::LinkInsecure { best_eps: 1.0 }),
        Err(e) => return Err(e),
    };
    let max_len = tally.n_z_total / 2;
    let mut best_eps = 1.0f64;
    let mut len = LENGTH_STEP;
    while len <= max_len {
        let eval = link.evaluate(len, targets)?;
        if eval.security.eps <= targets.eps_target {
            return Ok((len, link.report(&eval, tally.accumulation_time_s)));
        }
        best_eps = best_eps.min(eval.security.eps);
        len += LENGTH_STEP;
    }
    Err(FiniteKeyError::LinkInsecure { best_eps })
}
