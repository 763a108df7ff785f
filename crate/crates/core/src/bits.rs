//! Packed bit strings used for keys, seeds, digests and signatures.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A fixed-length string of bits, packed MSB-first into bytes.
///
/// Bit `i` lives in byte `i / 8` at bit position `7 - i % 8`. Unused trailing
/// bits of the last byte are always zero, so two equal bit strings have equal
/// byte representations.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawBits")]
pub struct BitString {
    bytes: Vec<u8>,
    len: usize,
}

/// Unchecked wire form of [`BitString`].
#[derive(Deserialize)]
struct RawBits {
    bytes: Vec<u8>,
    len: usize,
}

impl TryFrom<RawBits> for BitString {
    type Error = String;

    fn try_from(raw: RawBits) -> Result<Self, Self::Error> {
        if raw.bytes.len() != raw.len.div_ceil(8) {
            return Err(format!("{} bytes cannot hold exactly {} bits", raw.bytes.len(), raw.len));
        }
        let spare = raw.bytes.len() * 8 - raw.len;
        if spare > 0 && raw.bytes.last().is_some_and(|b| b & ((1u8 << spare) - 1) != 0) {
            return Err("nonzero padding bits".into());
        }
        Ok(Self { bytes: raw.bytes, len: raw.len })
    }
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self { bytes: vec![0; len.div_ceil(8)], len }
    }

    /// Builds a bit string of `len` bits from packed bytes; extra bits are dropped.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Self {
        assert!(bytes.len() * 8 >= len, "not enough bytes for {len} bits");
        let mut bytes = bytes[..len.div_ceil(8)].to_vec();
        let tail = len % 8;
        if tail != 0 {
            if let Some(last) = bytes.last_mut() {
                *last &= 0xFF << (8 - tail);
            }
        }
        Self { bytes, len }
    }

    /// The whole bytes of `bytes`, `8 * bytes.len()` bits.
    pub fn from_byte_vec(bytes: Vec<u8>) -> Self {
        let len = bytes.len() * 8;
        Self { bytes, len }
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut out = Self::default();
        for b in bits {
            out.push(b);
        }
        out
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut bytes = vec![0u8; len.div_ceil(8)];
        rng.fill(bytes.as_mut_slice());
        Self::from_bytes(&bytes, len)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.bytes[i >> 3] >> (7 - (i & 7))) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u8 << (7 - (i & 7));
        if value {
            self.bytes[i >> 3] |= mask;
        } else {
            self.bytes[i >> 3] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.bytes[i >> 3] ^= 1u8 << (7 - (i & 7));
    }

    pub fn push(&mut self, value: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Bitwise XOR. Panics on length mismatch.
    pub fn xor(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len, "xor of bit strings with different lengths");
        let bytes = self.bytes.iter().zip(&other.bytes).map(|(a, b)| a ^ b).collect();
        Self { bytes, len: self.len }
    }

    pub fn hamming_distance(&self, other: &Self) -> usize {
        assert_eq!(self.len, other.len, "hamming distance of bit strings with different lengths");
        self.bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Gathers the bits at `positions`, in order.
    pub fn select(&self, positions: &[usize]) -> Self {
        Self::from_bools(positions.iter().map(|&p| self.get(p)))
    }

    /// Keeps only the first `len` bits.
    pub fn truncate(&mut self, len: usize) {
        if len < self.len {
            *self = Self::from_bytes(&self.bytes, len);
        }
    }

    /// Bits `start..end` as a new string.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.len, "slice {start}..{end} out of range {}", self.len);
        if start % 8 == 0 {
            return Self::from_bytes(&self.bytes[start / 8..], end - start);
        }
        Self::from_bools((start..end).map(|i| self.get(i)))
    }

    pub fn extend_from(&mut self, other: &Self) {
        if self.len % 8 == 0 {
            self.bytes.extend_from_slice(&other.bytes);
            self.len += other.len;
        } else {
            for b in other.iter() {
                self.push(b);
            }
        }
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 64 {
            let s: String = self.iter().map(|b| if b { '1' } else { '0' }).collect();
            write!(f, "BitString({s})")
        } else {
            write!(f, "BitString(len={}, ones={})", self.len, self.count_ones())
        }
    }
}
