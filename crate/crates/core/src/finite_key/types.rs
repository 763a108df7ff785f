use serde::{Deserialize, Serialize};

use super::FiniteKeyError;
use crate::binary_entropy;

/// Error-correction inefficiency assumed when no measured leakage is supplied.
pub const DEFAULT_EC_INEFFICIENCY: f64 = 1.16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    Signal,
    Decoy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

/// Interpretation choices inside the bounds that the underlying analysis
/// leaves open. The default is the natural logarithm and the decoy
/// intensity in the vacuum upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Conventions {
    /// Logarithm inside the Hoeffding widths and the sampling correction.
    pub log_base: LogBase,
    /// Intensity whose error count enters the vacuum upper bound.
    pub vacuum_upper_intensity: Intensity,
}

impl Default for Conventions {
    fn default() -> Self {
        Self { log_base: LogBase::Natural, vacuum_upper_intensity: Intensity::Decoy }
    }
}

impl Conventions {
    pub fn log(&self, x: f64) -> f64 {
        match self.log_base {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
        }
    }
}

/// Source intensities and the sender's selection probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityConfig {
    pub mu: f64,
    pub nu: f64,
    pub p_mu: f64,
    pub p_nu: f64,
    pub p_z: f64,
    pub p_x: f64,
}

impl IntensityConfig {
    pub fn validate(&self) -> Result<(), FiniteKeyError> {
        let bad = |m: String| Err(FiniteKeyError::InvalidConfig(m));
        if !(self.nu > 0.0 && self.mu > self.nu) {
            return bad(format!("need mu > nu > 0, got mu={} nu={}", self.mu, self.nu));
        }
        for (name, p) in [("p_mu", self.p_mu), ("p_nu", self.p_nu), ("p_z", self.p_z), ("p_x", self.p_x)] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("{name}={p} is not in (0, 1)"));
            }
        }
        // published tables round to three digits, so allow a little slack
        if (self.p_mu + self.p_nu - 1.0).abs() > 2e-3 {
            return bad(format!("p_mu + p_nu = {} != 1", self.p_mu + self.p_nu));
        }
        if (self.p_z + self.p_x - 1.0).abs() > 2e-3 {
            return bad(format!("p_z + p_x = {} != 1", self.p_z + self.p_x));
        }
        Ok(())
    }

    pub fn mean(&self, k: Intensity) -> f64 {
        match k {
            Intensity::Signal => self.mu,
            Intensity::Decoy => self.nu,
        }
    }

    pub fn prob(&self, k: Intensity) -> f64 {
        match k {
            Intensity::Signal => self.p_mu,
            Intensity::Decoy => self.p_nu,
        }
    }

    pub fn basis_prob(&self, b: Basis) -> f64 {
        match b {
            Basis::Z => self.p_z,
            Basis::X => self.p_x,
        }
    }
}

/// Sifted detection and error counts of one link.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionTally {
    pub n_z_mu: u64,
    pub n_z_nu: u64,
    pub m_z_mu: u64,
    pub m_z_nu: u64,
    pub n_x_mu: u64,
    pub n_x_nu: u64,
    pub m_x_mu: u64,
    pub m_x_nu: u64,
    pub n_z_total: u64,
    pub accumulation_time_s: f64,
}

impl DetectionTally {
    pub fn validate(&self) -> Result<(), FiniteKeyError> {
        let bad = |m: String| Err(FiniteKeyError::InvalidTally(m));
        for (name, errs, dets) in [
            ("m_z_mu", self.m_z_mu, self.n_z_mu),
            ("m_z_nu", self.m_z_nu, self.n_z_nu),
            ("m_x_mu", self.m_x_mu, self.n_x_mu),
            ("m_x_nu", self.m_x_nu, self.n_x_nu),
        ] {
            if errs > dets {
                return bad(format!("{name}={errs} exceeds its detection count {dets}"));
            }
        }
        if self.n_z_total != self.n_z_mu + self.n_z_nu {
            return bad(format!(
                "n_z_total={} != n_z_mu + n_z_nu = {}",
                self.n_z_total,
                self.n_z_mu + self.n_z_nu
            ));
        }
        if !(self.accumulation_time_s >= 0.0 && self.accumulation_time_s.is_finite()) {
            return bad(format!("accumulation_time_s={} is not a finite nonnegative time", self.accumulation_time_s));
        }
        Ok(())
    }

    pub fn detections(&self, basis: Basis, k: Intensity) -> u64 {
        match (basis, k) {
            (Basis::Z, Intensity::Signal) => self.n_z_mu,
            (Basis::Z, Intensity::Decoy) => self.n_z_nu,
            (Basis::X, Intensity::Signal) => self.n_x_mu,
            (Basis::X, Intensity::Decoy) => self.n_x_nu,
        }
    }

    pub fn errors(&self, basis: Basis, k: Intensity) -> u64 {
        match (basis, k) {
            (Basis::Z, Intensity::Signal) => self.m_z_mu,
            (Basis::Z, Intensity::Decoy) => self.m_z_nu,
            (Basis::X, Intensity::Signal) => self.m_x_mu,
            (Basis::X, Intensity::Decoy) => self.m_x_nu,
        }
    }

    pub fn basis_detections(&self, basis: Basis) -> u64 {
        self.detections(basis, Intensity::Signal) + self.detections(basis, Intensity::Decoy)
    }

    pub fn basis_errors(&self, basis: Basis) -> u64 {
        self.errors(basis, Intensity::Signal) + self.errors(basis, Intensity::Decoy)
    }

    /// Z-basis QBER pooled over both intensities; 0 for an empty tally.
    pub fn e_z(&self) -> f64 {
        let n = self.basis_detections(Basis::Z);
        if n == 0 {
            0.0
        } else {
            self.basis_errors(Basis::Z) as f64 / n as f64
        }
    }

    /// Every count multiplied by `c`, rounded; time scales too.
    pub fn scaled(&self, c: f64) -> Self {
        let s = |v: u64| (v as f64 * c).round() as u64;
        let mut t = Self {
            n_z_mu: s(self.n_z_mu),
            n_z_nu: s(self.n_z_nu),
            m_z_mu: s(self.m_z_mu),
            m_z_nu: s(self.m_z_nu),
            n_x_mu: s(self.n_x_mu),
            n_x_nu: s(self.n_x_nu),
            m_x_mu: s(self.m_x_mu),
            m_x_nu: s(self.m_x_nu),
            n_z_total: 0,
            accumulation_time_s: self.accumulation_time_s * c,
        };
        t.n_z_total = t.n_z_mu + t.n_z_nu;
        t
    }

    pub fn merge(&mut self, other: &Self) {
        self.n_z_mu += other.n_z_mu;
        self.n_z_nu += other.n_z_nu;
        self.m_z_mu += other.m_z_mu;
        self.m_z_nu += other.m_z_nu;
        self.n_x_mu += other.n_x_mu;
        self.n_x_nu += other.n_x_nu;
        self.m_x_mu += other.m_x_mu;
        self.m_x_nu += other.m_x_nu;
        self.n_z_total += other.n_z_total;
        self.accumulation_time_s += other.accumulation_time_s;
    }
}

/// Confidence and length targets for one signing session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecurityTargets {
    #[serde(default = "default_eps")]
    pub eps_sf: f64,
    #[serde(default = "default_eps")]
    pub eps_cor: f64,
    pub eps_target: f64,
    pub message_len_bits: u64,
    /// Measured error-correction leakage; `None` falls back to `n_Z f h(E_Z)`.
    #[serde(default)]
    pub lambda_ec_bits: Option<f64>,
}

fn default_eps() -> f64 {
    1e-10
}

impl SecurityTargets {
    pub fn new(eps_target: f64, message_len_bits: u64) -> Self {
        Self { eps_sf: 1e-10, eps_cor: 1e-10, eps_target, message_len_bits, lambda_ec_bits: None }
    }

    pub fn validate(&self) -> Result<(), FiniteKeyError> {
        for (name, e) in [("eps_sf", self.eps_sf), ("eps_cor", self.eps_cor), ("eps_target", self.eps_target)] {
            if !(e > 0.0 && e < 1.0) {
                return Err(FiniteKeyError::InvalidArgument(format!("{name}={e} is not in (0, 1)")));
            }
        }
        if self.message_len_bits == 0 {
            return Err(FiniteKeyError::InvalidArgument("message_len_bits must be at least 1".into()));
        }
        if let Some(l) = self.lambda_ec_bits {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(FiniteKeyError::InvalidArgument(format!("lambda_ec_bits={l} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Leakage charged for `tally`: the measured value when present.
    pub fn lambda_ec(&self, tally: &DetectionTally) -> f64 {
        self.lambda_ec_bits.unwrap_or_else(|| {
            tally.n_z_total as f64 * DEFAULT_EC_INEFFICIENCY * binary_entropy(tally.e_z())
        })
    }
}

/// Every bound derived for one link at one signature length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub tau0: f64,
    pub tau1: f64,
    pub s_z0_l: f64,
    pub s_z1_l: f64,
    pub s_z0_u: f64,
    pub s_x1_l: f64,
    pub v_x1_u: f64,
    pub phi_z_u: f64,
    pub e_z: f64,
    #[serde(rename = "h_min_per_L")]
    pub h_min_per_l: f64,
    pub eps_rob: f64,
    pub eps_rep: f64,
    pub eps_for: f64,
    pub eps: f64,
    pub signature_len_bits: u64,
    pub signature_rate_tps: f64,
}
