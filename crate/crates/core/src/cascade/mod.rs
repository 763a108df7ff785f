//! Cascade reconciliation with exact leakage accounting, followed by hash
//! verification of the corrected keys.
//!
//! The session is split into two roles. The [`CascadeCorrector`] (Alice) drives
//! the protocol and flips her own bits; the [`CascadeResponder`] (Bob or
//! Charlie) only answers parity queries over its unchanged key. They talk
//! through a [`ParityChannel`], so the same corrector runs in-process
//! ([`LocalChannel`]) or over a socket.
//!
//! Each pass shuffles the round with a permutation derived from the shared
//! seed. In a binary search only the left half's parity is asked for; the
//! right half follows from the enclosing block's known parity. Every parity
//! the responder reveals is cached on the corrector side and never requested
//! twice, so the leakage count equals the number of answered parity bits.

mod party;
mod verify;

pub use party::*;
pub use verify::*;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;

/// Pass 1 block length constant: blocks of `0.73 / E` bits.
pub const BLOCK_CONSTANT: f64 = 0.73;
/// Lower bound on the residual error estimate used after pass 1.
pub const RESIDUAL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CascadeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("key lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("transport: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconciliationConfig {
    pub round_key_len: usize,
    /// Total number of passes, the first included.
    pub passes: u32,
    pub eps_cor: f64,
    pub seed: u64,
    /// Error rate estimate that sets the first pass's block length.
    pub qber_estimate: f64,
}

impl Default for ReconciliationConfig {
    fn default() -> Self {
        Self { round_key_len: 1_000_000, passes: 3, eps_cor: 1e-10, seed: 0, qber_estimate: 0.01 }
    }
}

impl ReconciliationConfig {
    pub fn validate(&self) -> Result<(), CascadeError> {
        let bad = |m: String| Err(CascadeError::InvalidArgument(m));
        if self.round_key_len == 0 || self.round_key_len > u32::MAX as usize {
            return bad(format!("round_key_len={} out of range", self.round_key_len));
        }
        if self.passes < 2 {
            return bad(format!("passes={} must be at least 2", self.passes));
        }
        if !(0.0..=0.5).contains(&self.qber_estimate) {
            return bad(format!("qber_estimate={} not in [0, 0.5]", self.qber_estimate));
        }
        verification_bits(self.eps_cor)?;
        Ok(())
    }

    pub fn rounds(&self, key_len: usize) -> usize {
        key_len.div_ceil(self.round_key_len)
    }

    pub(crate) fn round_range(&self, key_len: usize, round: usize) -> (usize, usize) {
        let start = round * self.round_key_len;
        (start, (start + self.round_key_len).min(key_len))
    }
}

/// First-pass block length `max(2, round(0.73 / e_z))`; a zero estimate
/// means a single block spanning the round.
pub fn block_length(e_z: f64, round_key_len: usize) -> Result<usize, CascadeError> {
    if !(0.0..=0.5).contains(&e_z) {
        return Err(CascadeError::InvalidArgument(format!("e_z={e_z} not in [0, 0.5]")));
    }
    if e_z == 0.0 {
        return Ok(round_key_len);
    }
    Ok(((BLOCK_CONSTANT / e_z).round() as usize).max(2))
}

/// The shuffle of one pass: `perm[j]` is the round-local index at pass position `j`.
pub(crate) fn pass_permutation(seed: u64, round: u32, pass: u32, len: usize) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((round as u64) << 16) | pass as u64);
    let mut perm: Vec<u32> = (0..len as u32).collect();
    perm.shuffle(&mut rng);
    perm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CascadeMessage {
    /// Ranges are half-open intervals of pass positions.
    ParityRequest { round: u32, pass: u32, ranges: Vec<(u32, u32)> },
    ParityAnswer { parities: Vec<bool> },
    TagExchange { tag: Tag },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sender {
    Corrector,
    Responder,
}

pub type Transcript = Vec<(Sender, CascadeMessage)>;

/// Bits disclosed according to a transcript: answered parities plus the
/// corrector's published tag.
pub fn transcript_leakage(transcript: &[(Sender, CascadeMessage)]) -> u64 {
    transcript
        .iter()
        .map(|(from, m)| match (from, m) {
            (_, CascadeMessage::ParityAnswer { parities }) => parities.len() as u64,
            (Sender::Corrector, CascadeMessage::TagExchange { tag }) => tag.bits as u64,
            _ => 0,
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconciliationResult {
    pub corrected_key: BitString,
    /// Parity bits plus verification bits.
    pub leakage_bits: u64,
    pub parity_bits: u64,
    pub verified: bool,
    pub rounds_used: usize,
    /// Positions the corrector flipped; always empty on the responder.
    pub flipped: Vec<usize>,
}

impl ReconciliationResult {
    /// Leakage relative to the Shannon limit, `leakage / (n h(e))`.
    pub fn efficiency(&self, e: f64) -> f64 {
        self.leakage_bits as f64 / (self.corrected_key.len() as f64 * crate::binary_entropy(e))
    }
}

/// Reconciles `key_a` (corrector) against `key_b` (responder) in-process.
pub fn reconcile(
    key_a: &BitString,
    key_b: &BitString,
    cfg: &ReconciliationConfig,
) -> Result<(ReconciliationResult, ReconciliationResult), CascadeError> {
    let (a, b, _) = reconcile_with_transcript(key_a, key_b, cfg)?;
    Ok((a, b))
}

pub fn reconcile_with_transcript(
    key_a: &BitString,
    key_b: &BitString,
    cfg: &ReconciliationConfig,
) -> Result<(ReconciliationResult, ReconciliationResult, Transcript), CascadeError> {
    if key_a.len() != key_b.len() {
        return Err(CascadeError::LengthMismatch(key_a.len(), key_b.len()));
    }
    let mut responder = CascadeResponder::new(key_b.clone(), *cfg)?;
    let corrector = CascadeCorrector::new(key_a.clone(), *cfg)?;
    let mut ch = LocalChannel::recording(&mut responder);
    let a = corrector.run(&mut ch)?;
    let transcript = ch.into_transcript();
    Ok((a, responder.finish(), transcript))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noisy_pair(n: usize, e: f64, seed: u64) -> (BitString, BitString) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = BitString::random(n, &mut rng);
        let mut b = a.clone();
        for i in 0..n {
            if rng.gen_bool(e) {
                b.flip(i);
            }
        }
        (a, b)
    }

    #[test]
    fn block_length_cases() {
        assert_eq!(block_length(0.01, 1_000_000).unwrap(), 73);
        assert_eq!(block_length(0.5, 1_000_000).unwrap(), 2);
        assert_eq!(block_length(0.005, 1_000_000).unwrap(), 146);
        assert_eq!(block_length(0.0, 1234).unwrap(), 1234);
        assert!(block_length(0.6, 10).is_err());
    }

    #[test]
    fn permutations_are_shared_and_distinct() {
        let p = pass_permutation(5, 0, 1, 1000);
        assert_eq!(p, pass_permutation(5, 0, 1, 1000));
        assert_ne!(p, pass_permutation(5, 0, 2, 1000));
        assert_ne!(p, pass_permutation(5, 1, 1, 1000));
        let mut s = p.clone();
        s.sort_unstable();
        assert_eq!(s, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn identical_keys_leak_only_block_parities() {
        let (a, _) = noisy_pair(10_000, 0.0, 3);
        let cfg = ReconciliationConfig { seed: 8, ..Default::default() };
        let (ra, rb, t) = reconcile_with_transcript(&a, &a, &cfg).unwrap();
        assert!(ra.verified && rb.verified);
        assert!(ra.flipped.is_empty());
        // 73, then max(146, 730), then 1460
        let blocks = 10_000usize.div_ceil(73) + 10_000usize.div_ceil(730) + 10_000usize.div_ceil(1460);
        assert_eq!(ra.parity_bits, blocks as u64);
        assert_eq!(ra.leakage_bits, blocks as u64 + 34);
        assert_eq!(rb.leakage_bits, ra.leakage_bits);
        assert_eq!(transcript_leakage(&t), ra.leakage_bits);
    }

    #[test]
    fn planted_single_error() {
        let (a, _) = noisy_pair(10_000, 0.0, 4);
        let mut b = a.clone();
        b.flip(4321);
        let cfg = ReconciliationConfig { seed: 1, ..Default::default() };
        let (ra, rb) = reconcile(&a, &b, &cfg).unwrap();
        assert_eq!(ra.flipped, vec![4321]);
        assert_eq!(ra.corrected_key, b);
        assert_eq!(rb.corrected_key, b);
        assert!(ra.verified);
    }

    #[test]
    fn multi_round_noisy_keys() {
        let (a, b) = noisy_pair(250_000, 0.02, 5);
        let cfg = ReconciliationConfig { round_key_len: 100_000, passes: 4, qber_estimate: 0.02, seed: 6, ..Default::default() };
        let (ra, rb, t) = reconcile_with_transcript(&a, &b, &cfg).unwrap();
        assert_eq!(ra.rounds_used, 3);
        assert!(ra.verified && rb.verified);
        assert_eq!(ra.corrected_key, b);
        assert_eq!(ra.flipped.len(), a.hamming_distance(&b));
        assert_eq!(transcript_leakage(&t), ra.leakage_bits);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = ReconciliationConfig::default();
        assert!(matches!(
            reconcile(&BitString::zeros(10), &BitString::zeros(11), &cfg),
            Err(CascadeError::LengthMismatch(10, 11))
        ));
        let bad = ReconciliationConfig { passes: 1, ..cfg };
        assert!(reconcile(&BitString::zeros(10), &BitString::zeros(10), &bad).is_err());
    }

    #[test]
    fn empty_keys() {
        let (ra, _) = reconcile(&BitString::default(), &BitString::default(), &ReconciliationConfig::default()).unwrap();
        assert!(ra.verified);
        assert_eq!(ra.parity_bits, 0);
        assert_eq!(ra.rounds_used, 0);
    }
}
