//! Run configuration for `simulate` and `keygen-sim`.

use std::path::{Path, PathBuf};

use qds_core::channel::{ChannelModel, Sampler};
use qds_core::finite_key::{IntensityConfig, SecurityTargets};
use serde::{Deserialize, Serialize};

use crate::exit::{ExitKind, Failure};
use crate::files::read_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub intensity: IntensityConfig,
    pub channel: ChannelModel,
    pub n_pulses: u64,
    pub seed: u64,
    #[serde(default)]
    pub sampler: Sampler,
}

/// Both quantum links; a signing run needs exactly these two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Links {
    pub bob: LinkConfig,
    pub charlie: LinkConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub eps_target: f64,
    #[serde(default = "default_eps")]
    pub eps_sf: f64,
    #[serde(default = "default_eps")]
    pub eps_cor: f64,
    /// Document length used when no message file is configured.
    #[serde(default)]
    pub message_len_bits: Option<u64>,
}

fn default_eps() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub passes: u32,
    pub round_key_len: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self { passes: 3, round_key_len: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportKind {
    #[default]
    InProcess,
    /// Loopback TCP with one connection per party pair.
    Socket,
}

impl TransportKind {
    pub fn name(self) -> &'static str {
        match self {
            TransportKind::InProcess => "in-process",
            TransportKind::Socket => "socket",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversaryConfig {
    /// Bob alters one message byte before forwarding to Charlie.
    pub bob_tamper: bool,
    /// Alice signs with keys drawn from this seed instead of her store.
    pub alice_corrupt_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub links: Links,
    pub targets: TargetConfig,
    #[serde(default)]
    pub reconciliation: ReconConfig,
    /// Document to sign, relative to the config file.
    #[serde(default)]
    pub message_path: Option<PathBuf>,
    #[serde(default)]
    pub signing_seed: u64,
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default)]
    pub adversary: AdversaryConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), Failure> {
        let cfg: RunConfig = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn message_file(&self, base: &Path) -> Option<PathBuf> {
        self.message_path.as_ref().map(|p| if p.is_absolute() { p.clone() } else { base.join(p) })
    }

    /// The configured document, if any.
    pub fn read_message(&self, base: &Path) -> Result<Option<Vec<u8>>, Failure> {
        self.message_file(base).map(|p| crate::files::read_bytes(&p).map_err(Failure::from)).transpose()
    }

    pub fn security_targets(&self, message_len_bits: u64, lambda_ec_bits: f64) -> SecurityTargets {
        SecurityTargets {
            eps_sf: self.targets.eps_sf,
            eps_cor: self.targets.eps_cor,
            eps_target: self.targets.eps_target,
            message_len_bits,
            lambda_ec_bits: Some(lambda_ec_bits),
        }
    }
}

/// Message length to plan for: the document's size when present, else the
/// configured length.
pub fn planned_message_bits(cfg: &RunConfig, message: Option<&[u8]>) -> Result<u64, Failure> {
    match (message, cfg.targets.message_len_bits) {
        (Some(m), _) if !m.is_empty() => Ok(8 * m.len() as u64),
        (Some(_), _) => Err(Failure::new(ExitKind::Parse, "message file is empty")),
        (None, Some(m)) if m > 0 => Ok(m),
        _ => Err(Failure::new(ExitKind::Parse, "config needs message_path or targets.message_len_bits")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::files::parse_json;

    const LINK: &str = r#"{
        "intensity": {"mu": 0.4, "nu": 0.1, "p_mu": 0.5, "p_nu": 0.5, "p_z": 0.6, "p_x": 0.4},
        "channel": {"loss_db": 10, "detector_efficiency": 1, "dark_count_prob": 1e-7, "misalignment": 0.01, "pulse_rate_hz": 1e9},
        "n_pulses": 1000, "seed": 1
    }"#;

    #[test]
    fn both_links_are_required() {
        let ok = format!(r#"{{"links": {{"bob": {LINK}, "charlie": {LINK}}}, "targets": {{"eps_target": 1e-7, "message_len_bits": 8}}}}"#);
        let cfg: RunConfig = parse_json(Path::new("c.json"), &ok).unwrap();
        assert_eq!(cfg.transport, TransportKind::InProcess);
        assert_eq!(cfg.reconciliation, ReconConfig::default());
        assert_eq!(planned_message_bits(&cfg, None).unwrap(), 8);
        assert_eq!(planned_message_bits(&cfg, Some(b"abc")).unwrap(), 24);

        let one = format!(r#"{{"links": {{"bob": {LINK}}}, "targets": {{"eps_target": 1e-7}}}}"#);
        let e = parse_json::<RunConfig>(Path::new("c.json"), &one).unwrap_err();
        assert!(e.to_string().contains("charlie"), "{e}");
        let typo = ok.replace("\"seed\"", "\"sead\"");
        assert!(parse_json::<RunConfig>(Path::new("c.json"), &typo).is_err());
    }
}
