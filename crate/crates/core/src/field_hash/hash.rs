//! The generalized division hash `h(M) = M(x) * x^d mod P(x)` over GF(256).

use serde::{Deserialize, Serialize};

use super::field::Gf256;
use super::poly::{is_irreducible_ben_or, FieldPolynomial};
use super::FieldHashError;
use crate::bits::BitString;

/// The random string that selects a hash function; its length is the digest length L.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashSeed {
    bits: BitString,
}

impl HashSeed {
    pub fn new(bits: BitString) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn digest_len_bits(&self) -> usize {
        self.bits.len()
    }
}

/// An L-bit hash output.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Digest {
    bits: BitString,
}

impl Digest {
    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn into_bits(self) -> BitString {
        self.bits
    }

    pub fn len_bits(&self) -> usize {
        self.bits.len()
    }
}

fn degree_for(len_bits: usize) -> Result<usize, FieldHashError> {
    if len_bits == 0 || len_bits % 8 != 0 {
        return Err(FieldHashError::DigestLength(len_bits));
    }
    Ok(len_bits / 8)
}

/// Deterministically maps a seed to a monic irreducible polynomial of degree L/8.
///
/// The seed bytes are the coefficients of `x^{d-1}, ..., x^0` of a monic
/// candidate. A zero constant term is replaced by 1. Reducible candidates are
/// advanced as a base-256 counter whose least significant digit is the
/// constant term, which cycles through 1..=255 only, until an irreducible
/// polynomial is reached.
pub fn derive_modulus(seed: &HashSeed) -> Result<FieldPolynomial, FieldHashError> {
    let d = degree_for(seed.digest_len_bits())?;
    // low_first[i] = coefficient of x^i; low_first[d] = 1
    let mut low_first: Vec<Gf256> = seed.bits().as_bytes().iter().rev().map(|&b| Gf256(b)).collect();
    low_first.push(Gf256::ONE);
    if low_first[0].is_zero() {
        low_first[0] = Gf256::ONE;
    }
    loop {
        let candidate = FieldPolynomial::from_low_first(low_first.clone());
        if is_irreducible_ben_or(&candidate)? {
            debug_assert_eq!(super::poly::is_irreducible(&candidate), Ok(true));
            return Ok(candidate);
        }
        increment(&mut low_first[..d]);
    }
}

fn increment(digits: &mut [Gf256]) {
    let (constant, rest) = digits.split_first_mut().expect("degree >= 1");
    if constant.0 < 255 {
        constant.0 += 1;
        return;
    }
    constant.0 = 1;
    for digit in rest {
        if digit.0 < 255 {
            digit.0 += 1;
            return;
        }
        digit.0 = 0;
    }
}

/// A division hash with a fixed monic modulus of degree `d`.
///
/// Keeps a table of `c * (P(x) - x^d)` for every leading coefficient `c`, so
/// each message byte costs one shift and one `d`-byte XOR.
pub struct DivisionHasher {
    degree: usize,
    /// `rows[c]` holds the coefficients `x^{d-1}..x^0` of `c * (P(x) - x^d)`.
    rows: Vec<u8>,
}

impl DivisionHasher {
    pub fn new(modulus: &FieldPolynomial) -> Result<Self, FieldHashError> {
        let degree = match modulus.degree() {
            None | Some(0) => return Err(FieldHashError::ConstantPolynomial),
            Some(d) => d,
        };
        if !modulus.is_monic() {
            return Err(FieldHashError::NotMonic);
        }
        let mut rows = vec![0u8; 256 * degree];
        for c in 0..256usize {
            for j in 0..degree {
                // position 0 in the row is x^{d-1}
                rows[c * degree + j] = (Gf256(c as u8) * modulus.coeff(degree - 1 - j)).0;
            }
        }
        Ok(Self { degree, rows })
    }

    pub fn from_seed(seed: &HashSeed) -> Result<Self, FieldHashError> {
        Self::new(&derive_modulus(seed)?)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `message(x) * x^d mod P(x)` as `d` bytes, highest order first.
    pub fn remainder(&self, message: &[u8]) -> Vec<u8> {
        let d = self.degree;
        let mut r = vec![0u8; d];
        // Horner over the message followed by d zero bytes (the x^d factor).
        let feed = message.iter().copied().chain(std::iter::repeat(0u8).take(d));
        for byte in feed {
            let lead = r[0] as usize;
            r.copy_within(1.., 0);
            r[d - 1] = byte;
            if lead != 0 {
                let row = &self.rows[lead * d..(lead + 1) * d];
                for (ri, &rw) in r.iter_mut().zip(row) {
                    *ri ^= rw;
                }
            }
        }
        r
    }

    pub fn digest(&self, message: &[u8]) -> Result<Digest, FieldHashError> {
        if message.is_empty() {
            return Err(FieldHashError::EmptyMessage);
        }
        Ok(Digest { bits: BitString::from_byte_vec(self.remainder(message)) })
    }
}

/// L-bit digest of `message` under the hash function selected by `seed`.
///
/// Message bytes become coefficients of `M(x)`, first byte highest order.
pub fn hash_document(message: &[u8], seed: &HashSeed) -> Result<Digest, FieldHashError> {
    if message.is_empty() {
        return Err(FieldHashError::EmptyMessage);
    }
    DivisionHasher::from_seed(seed)?.digest(message)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_hash::poly::is_irreducible;

    fn seed(bytes: &[u8]) -> HashSeed {
        HashSeed::new(BitString::from_byte_vec(bytes.to_vec()))
    }

    #[test]
    fn zero_seed_degree_one_gives_x_plus_one() {
        assert_eq!(derive_modulus(&seed(&[0])).unwrap(), FieldPolynomial::from_bytes(&[1, 1]));
    }

    #[test]
    fn rejects_non_byte_lengths() {
        let s = HashSeed::new(BitString::zeros(12));
        assert_eq!(derive_modulus(&s), Err(FieldHashError::DigestLength(12)));
        assert!(matches!(hash_document(b"m", &s), Err(FieldHashError::DigestLength(12))));
        assert_eq!(derive_modulus(&HashSeed::new(BitString::zeros(0))), Err(FieldHashError::DigestLength(0)));
    }

    #[test]
    fn empty_message_rejected() {
        assert_eq!(hash_document(b"", &seed(&[1, 2])), Err(FieldHashError::EmptyMessage));
    }

    #[test]
    fn zero_message_zero_digest() {
        let dig = hash_document(&[0u8; 40], &seed(&[9, 8, 7, 6])).unwrap();
        assert_eq!(dig.len_bits(), 32);
        assert_eq!(dig.bits().count_ones(), 0);
    }

    #[test]
    fn derived_modulus_is_monic_irreducible_and_deterministic() {
        for s in [&[0x12u8, 0xFF, 0x00, 0x80][..], &[0x9E, 0x37, 0x79, 0xB9, 0x7F, 0x4A, 0x7C, 0x15], &[0xAB; 16], &[0x5C; 100]] {
            let m = derive_modulus(&seed(s)).unwrap();
            assert_eq!(m.degree(), Some(s.len()));
            assert!(m.is_monic());
            assert_eq!(is_irreducible(&m), Ok(true));
            assert_eq!(derive_modulus(&seed(s)).unwrap(), m);
        }
    }

    #[test]
    fn walk_starts_at_seed_when_already_irreducible() {
        let start = derive_modulus(&seed(&[0x37, 0x11])).unwrap();
        let coeffs = start.coefficients();
        let again = derive_modulus(&seed(&[coeffs[1].0, coeffs[2].0])).unwrap();
        assert_eq!(again, start);
    }

    #[test]
    fn increment_skips_zero_constant() {
        let mut digits = [Gf256(255), Gf256(4)];
        increment(&mut digits);
        assert_eq!(digits, [Gf256(1), Gf256(5)]);
        let mut wrap = [Gf256(255), Gf256(255)];
        increment(&mut wrap);
        assert_eq!(wrap, [Gf256(1), Gf256(0)]);
    }

    #[test]
    fn remainder_matches_poly_mod() {
        let modulus = derive_modulus(&seed(&[3, 1, 4, 1, 5, 9, 2, 6])).unwrap();
        let hasher = DivisionHasher::new(&modulus).unwrap();
        let msg: Vec<u8> = (0..300u32).map(|i| (i * 37 % 251) as u8).collect();
        let shifted = &FieldPolynomial::from_bytes(&msg) * &FieldPolynomial::monomial(8, Gf256::ONE);
        let rem = super::super::poly::poly_mod(&shifted, &modulus).unwrap();
        let expected: Vec<u8> = (0..8).rev().map(|i| rem.coeff(i).0).collect();
        assert_eq!(hasher.remainder(&msg), expected);
    }
}
