//! Error verification with a keyed polynomial hash over GF(2^64).
//!
//! The tag of a key is `trunc_t(s * (Σ w_i r^(N+1-i) + len·r))` where `w_i` are
//! the key's 64-bit words, `(r, s)` come from the shared seed and `t` is the
//! disclosed bit count. Two different keys of `N` words collide with
//! probability at most `(N + 1) / 2^64 + 2^-t`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CascadeError;
use crate::bits::BitString;

/// Low part of the modulus x^64 + x^4 + x^3 + x + 1.
const GF64_REDUCTION: u64 = 0x1B;

/// ChaCha stream reserved for the hash key; shuffles use low stream numbers.
const TAG_KEY_STREAM: u64 = u64::MAX;

pub fn gf64_mul(mut a: u64, mut b: u64) -> u64 {
    let mut r = 0u64;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        b >>= 1;
        let carry = a >> 63;
        a <<= 1;
        if carry == 1 {
            a ^= GF64_REDUCTION;
        }
    }
    r
}

/// `⌈log2(1/eps_cor)⌉`, the number of tag bits published.
pub fn verification_bits(eps_cor: f64) -> Result<u32, CascadeError> {
    if !(eps_cor > 0.0 && eps_cor < 1.0) {
        return Err(CascadeError::InvalidArgument(format!("eps_cor={eps_cor} is not in (0, 1)")));
    }
    let bits = (-eps_cor.log2()).ceil() as u32;
    if bits > 60 {
        return Err(CascadeError::InvalidArgument(format!("eps_cor={eps_cor} needs more than 60 tag bits")));
    }
    Ok(bits.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tag {
    pub value: u64,
    pub bits: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct TagKey {
    r: u64,
    s: u64,
}

impl TagKey {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(TAG_KEY_STREAM);
        let r = rng.gen();
        let mut s = 0;
        while s == 0 {
            s = rng.gen();
        }
        Self { r, s }
    }

    pub fn tag(&self, key: &BitString, bits: u32) -> Tag {
        let mut h = 0u64;
        for chunk in key.as_bytes().chunks(8) {
            let mut w = [0u8; 8];
            w[..chunk.len()].copy_from_slice(chunk);
            h = gf64_mul(h ^ u64::from_be_bytes(w), self.r);
        }
        h = gf64_mul(h ^ key.len() as u64, self.r);
        let full = gf64_mul(h, self.s);
        Tag { value: full >> (64 - bits), bits }
    }
}

/// Compares the tags of both keys; returns the outcome and the bits disclosed.
pub fn verify(key_a: &BitString, key_b: &BitString, eps_cor: f64, seed: u64) -> Result<(bool, u32), CascadeError> {
    if key_a.len() != key_b.len() {
        return Err(CascadeError::LengthMismatch(key_a.len(), key_b.len()));
    }
    let bits = verification_bits(eps_cor)?;
    let k = TagKey::from_seed(seed);
    Ok((k.tag(key_a, bits) == k.tag(key_b, bits), bits))
}
