//! Link files: an intensity configuration, a tally and optional targets.
//! The bundled reference links additionally carry the published results.

use qds_core::finite_key::{DetectionTally, IntensityConfig, SecurityTargets};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub intensity: IntensityConfig,
    pub tally: DetectionTally,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<SecurityTargets>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<Published>,
}

/// Derived values as reported alongside the raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Published {
    pub e_z_percent: f64,
    pub s_z1_l: f64,
    pub phi_z_u: f64,
    pub len_bits: u64,
    pub eps: f64,
    pub rate_tps: f64,
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        [$(($name, include_str!(concat!("../data/reference/", $name, ".json")))),*]
    };
}

const BUNDLED: [(&str, &str); 8] = bundled!(
    "50km_AB", "50km_AC", "100km_AB", "100km_AC", "150km_AB", "150km_AC", "200km_AB", "200km_AC",
);

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// One bundled reference link by name, e.g. `100km_AC`.
pub fn bundled(name: &str) -> Option<LinkRecord> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| serde_json::from_str(text).unwrap_or_else(|e| panic!("bundled {n}: {e}")))
}

pub fn all_bundled() -> Vec<LinkRecord> {
    bundled_names().map(|n| bundled(n).expect("listed")).collect()
}
