//! Finite-key security analysis for the 1-decoy BB84 links feeding the
//! signature scheme.
//!
//! The chain runs from raw detection tallies to decoy-state yields
//! ([`vacuum_lower`], [`single_photon_lower`]), the phase-error bound
//! ([`phase_error_upper`]), the sampling corrections for an L-bit substring
//! ([`substring_bounds`]), the substring min-entropy ([`min_entropy`]) and the
//! resulting security parameters ([`security_bounds`]).
//! [`min_signature_length`] searches the shortest L meeting a target ε.
//!
//! Logarithms inside the Hoeffding corrections and inside [`gamma_upper`] are
//! natural logarithms. Bounds are clamped to their natural ranges rather than
//! rejected so that optimizers can walk through bad parameter regions.

mod bounds;
mod types;

pub use bounds::*;
pub use types::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FiniteKeyError {
    #[error("invalid intensity configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid detection tally: {0}")]
    InvalidTally(String),
    #[error("photon number {0} is not supported (only 0 and 1 enter the bounds)")]
    UnsupportedPhotonNumber(u32),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no signature length reaches the target; best achieved epsilon {best_eps:e}")]
    LinkInsecure { best_eps: f64 },
}
