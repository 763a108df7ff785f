//! Engine for the one-time universal hash quantum digital signature protocol
//! with a signer (Alice) and two receivers (Bob and Charlie).
//!
//! * [`field_hash`]: GF(256) polynomial hashing keyed by seeded irreducible moduli.
//! * [`finite_key`]: 1-decoy finite-key bounds, signature length and rate.
//! * [`channel`]: weak-coherent-pulse BB84 link simulator.
//! * [`cascade`]: Cascade reconciliation and hash-based verification.
//! * [`protocol`]: key stores and the three party state machines.

pub mod bits;
pub mod cascade;
pub mod channel;
pub mod field_hash;
pub mod finite_key;
pub mod protocol;

pub use bits::BitString;

/// Binary Shannon entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}
