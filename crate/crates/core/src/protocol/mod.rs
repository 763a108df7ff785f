//! Key stores and the signing/verification algebra of the three-party scheme.
//!
//! After distribution Alice holds `K_a = K_b ⊕ K_c`. A signing session draws
//! 2L unused positions: the first L give the X keys, the last L the Y keys.
//! Alice signs with `Sig = Dig ⊕ X_a` and `P_a = P ⊕ Y_a`, where the digest is
//! keyed by the fresh random `P`. A receiver that combines its share with the
//! other receiver's share recovers `X_a` and `Y_a` and recomputes the digest.
//!
//! [`roles`] holds the message-driven party drivers.

pub mod roles;

pub use roles::*;

use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::cascade::ReconciliationResult;
use crate::field_hash::{hash_document, FieldHashError, HashSeed};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("distribution failed: {0}")]
    DistributionFailure(String),
    #[error("key exhausted: need {needed} unused bits, {available} available")]
    KeyExhausted { needed: usize, available: usize },
    #[error("key position {0} already consumed")]
    PositionConsumed(usize),
    #[error("key position {position} out of range for a store of {len} bits")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("key position {0} announced twice")]
    DuplicatePosition(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("hash: {0}")]
    Hash(#[from] FieldHashError),
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected message: {0}")]
    UnexpectedMessage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Alice,
    Bob,
    Charlie,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

/// Smallest multiple of 8 that is at least `len_bits`.
pub fn round_signature_length(len_bits: u64) -> u64 {
    len_bits.div_ceil(8).max(1) * 8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawStore")]
pub struct KeyStore {
    pub owner: Role,
    key_bits: BitString,
    used_mask: BitString,
}

#[derive(Deserialize)]
struct RawStore {
    owner: Role,
    key_bits: BitString,
    used_mask: BitString,
}

impl TryFrom<RawStore> for KeyStore {
    type Error = ProtocolError;

    fn try_from(raw: RawStore) -> Result<Self, Self::Error> {
        Self::from_parts(raw.owner, raw.key_bits, raw.used_mask)
    }
}

impl KeyStore {
    pub fn new(owner: Role, key_bits: BitString) -> Self {
        let used_mask = BitString::zeros(key_bits.len());
        Self { owner, key_bits, used_mask }
    }

    /// Rebuilds a store from saved parts; the mask must match the key length.
    pub fn from_parts(owner: Role, key_bits: BitString, used_mask: BitString) -> Result<Self, ProtocolError> {
        if key_bits.len() != used_mask.len() {
            return Err(ProtocolError::InvalidArgument(format!(
                "used mask of {} bits for a key of {}",
                used_mask.len(),
                key_bits.len()
            )));
        }
        Ok(Self { owner, key_bits, used_mask })
    }

    pub fn key_bits(&self) -> &BitString {
        &self.key_bits
    }

    pub fn used_mask(&self) -> &BitString {
        &self.used_mask
    }

    pub fn len(&self) -> usize {
        self.key_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.key_bits.is_empty()
    }

    pub fn available(&self) -> usize {
        self.key_bits.len() - self.used_mask.count_ones()
    }

    pub fn is_used(&self, i: usize) -> bool {
        self.used_mask.get(i)
    }

    /// Checks and marks `positions` as consumed; nothing changes on error.
    pub fn consume(&mut self, positions: &[usize]) -> Result<(), ProtocolError> {
        let mut seen = BitString::zeros(self.len());
        for &p in positions {
            if p >= self.len() {
                return Err(ProtocolError::PositionOutOfRange { position: p, len: self.len() });
            }
            if self.used_mask.get(p) {
                return Err(ProtocolError::PositionConsumed(p));
            }
            if seen.get(p) {
                return Err(ProtocolError::DuplicatePosition(p));
            }
            seen.set(p, true);
        }
        for &p in positions {
            self.used_mask.set(p, true);
        }
        Ok(())
    }

    /// Consumes the announced positions and returns this party's share.
    pub fn take_share(&mut self, ann: &PositionAnnouncement) -> Result<KeyShare, ProtocolError> {
        ann.check()?;
        self.consume(&ann.positions)?;
        let (x_key, y_key) = self.split(ann);
        Ok(KeyShare { x_key, y_key, role: self.owner })
    }

    /// The X and Y key bits at the announced positions, without consuming.
    pub fn split(&self, ann: &PositionAnnouncement) -> (BitString, BitString) {
        let l = ann.positions.len() / 2;
        (self.key_bits.select(&ann.positions[..l]), self.key_bits.select(&ann.positions[l..]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionAnnouncement {
    pub positions: Vec<usize>,
}

impl PositionAnnouncement {
    pub fn signature_len_bits(&self) -> usize {
        self.positions.len() / 2
    }

    fn check(&self) -> Result<(), ProtocolError> {
        let l = self.positions.len();
        if l == 0 || l % 16 != 0 {
            return Err(ProtocolError::InvalidArgument(format!(
                "announcement of {l} positions is not 2L with L a positive multiple of 8"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureBundle {
    pub sig: BitString,
    pub message: Vec<u8>,
    pub p_a: BitString,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyShare {
    pub x_key: BitString,
    pub y_key: BitString,
    pub role: Role,
}

/// Both parties' reconciled keys of one link, Alice's copy first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconciledLink {
    pub alice_key: BitString,
    pub peer_key: BitString,
    pub verified: bool,
}

impl ReconciledLink {
    pub fn from_results(alice: &ReconciliationResult, peer: &ReconciliationResult) -> Self {
        Self {
            alice_key: alice.corrected_key.clone(),
            peer_key: peer.corrected_key.clone(),
            verified: alice.verified && peer.verified,
        }
    }

    fn len(&self) -> usize {
        self.alice_key.len()
    }
}

/// Cuts both links to their common length so they can be combined.
pub fn truncate_to_common(link_b: &mut ReconciledLink, link_c: &mut ReconciledLink) {
    let n = link_b.len().min(link_c.len());
    for k in [&mut link_b.alice_key, &mut link_b.peer_key, &mut link_c.alice_key, &mut link_c.peer_key] {
        k.truncate(n);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Distribution {
    pub alice: KeyStore,
    pub bob: KeyStore,
    pub charlie: KeyStore,
}

/// Builds the three stores from two verified links of equal length.
pub fn run_distribution(link_b: &ReconciledLink, link_c: &ReconciledLink) -> Result<Distribution, ProtocolError> {
    for (name, link) in [("Bob", link_b), ("Charlie", link_c)] {
        if !link.verified {
            return Err(ProtocolError::DistributionFailure(format!("{name} link failed error verification")));
        }
        if link.alice_key.len() != link.peer_key.len() {
            return Err(ProtocolError::DistributionFailure(format!("{name} link keys differ in length")));
        }
    }
    if link_b.len() != link_c.len() {
        return Err(ProtocolError::DistributionFailure(format!(
            "link lengths differ: {} vs {}",
            link_b.len(),
            link_c.len()
        )));
    }
    Ok(Distribution {
        alice: KeyStore::new(Role::Alice, link_b.alice_key.xor(&link_c.alice_key)),
        bob: KeyStore::new(Role::Bob, link_b.peer_key.clone()),
        charlie: KeyStore::new(Role::Charlie, link_c.peer_key.clone()),
    })
}

/// Samples 2L unused positions of Alice's store and marks them consumed.
pub fn select_positions(store: &mut KeyStore, len_bits: usize, seed: u64) -> Result<PositionAnnouncement, ProtocolError> {
    if len_bits == 0 || len_bits % 8 != 0 {
        return Err(ProtocolError::InvalidArgument(format!("L={len_bits} must be a positive multiple of 8")));
    }
    let needed = 2 * len_bits;
    let available = store.available();
    if available < needed {
        return Err(ProtocolError::KeyExhausted { needed, available });
    }
    let free: Vec<usize> = (0..store.len()).filter(|&i| !store.is_used(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<usize> = index::sample(&mut rng, free.len(), needed).into_iter().map(|j| free[j]).collect();
    store.consume(&positions)?;
    Ok(PositionAnnouncement { positions })
}

/// Generates the digest key `P` of `len_bits` bits.
pub fn digest_key(len_bits: usize, p_seed: u64) -> BitString {
    BitString::random(len_bits, &mut ChaCha8Rng::seed_from_u64(p_seed))
}

pub fn sign(message: &[u8], x_a: &BitString, y_a: &BitString, p_seed: u64) -> Result<SignatureBundle, ProtocolError> {
    let l = x_a.len();
    if y_a.len() != l || l == 0 || l % 8 != 0 {
        return Err(ProtocolError::InvalidArgument(format!(
            "X and Y keys of {} and {} bits; need equal positive multiples of 8",
            l,
            y_a.len()
        )));
    }
    if message.is_empty() {
        return Err(ProtocolError::InvalidArgument("empty message".into()));
    }
    let p = digest_key(l, p_seed);
    let dig = hash_document(message, &HashSeed::new(p.clone()))?;
    Ok(SignatureBundle { sig: dig.bits().xor(x_a), message: message.to_vec(), p_a: p.xor(y_a) })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    MalformedBundle(String),
    DigestMismatch,
    /// Bob rejected, so Charlie did not evaluate the bundle.
    ShortCircuited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject(RejectReason),
}

impl Decision {
    pub fn is_accept(&self) -> bool {
        matches!(self, Decision::Accept)
    }
}

/// The receiver check: combine both shares, undo the one-time pads, recompute the digest.
pub fn verify_as_receiver(bundle: &SignatureBundle, own: &KeyShare, peer: &KeyShare) -> Decision {
    let malformed = |m: String| Decision::Reject(RejectReason::MalformedBundle(m));
    let l = bundle.sig.len();
    let lens = [bundle.p_a.len(), own.x_key.len(), own.y_key.len(), peer.x_key.len(), peer.y_key.len()];
    if lens.iter().any(|&x| x != l) {
        return malformed(format!("length mismatch: sig {l} bits, others {lens:?}"));
    }
    if l == 0 || l % 8 != 0 {
        return malformed(format!("signature length {l} is not a positive multiple of 8"));
    }
    let k_x = own.x_key.xor(&peer.x_key);
    let k_y = own.y_key.xor(&peer.y_key);
    let expected = bundle.sig.xor(&k_x);
    let p = bundle.p_a.xor(&k_y);
    match hash_document(&bundle.message, &HashSeed::new(p)) {
        Ok(actual) if *actual.bits() == expected => Decision::Accept,
        Ok(_) => Decision::Reject(RejectReason::DigestMismatch),
        Err(e) => malformed(e.to_string()),
    }
}
