//! Arithmetic in GF(256) with the reduction polynomial x^8 + x^4 + x^3 + x + 1.
//!
//! The reduction polynomial is a protocol constant: every party must use the
//! same one for digests to agree.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign};

/// Low byte of the reduction polynomial x^8 + x^4 + x^3 + x + 1.
pub const REDUCTION: u8 = 0x1B;

/// Multiplication by shift-and-add, reducing on every overflow of x^8.
const fn mul_slow(mut a: u8, mut b: u8) -> u8 {
    let mut acc = 0u8;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= REDUCTION;
        }
        b >>= 1;
    }
    acc
}

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

// 0x03 generates the multiplicative group for this modulus.
const fn build_tables() -> Tables {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x = 1u8;
    let mut i = 0;
    while i < 255 {
        exp[i] = x;
        log[x as usize] = i as u8;
        x = mul_slow(x, 0x03);
        i += 1;
    }
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    Tables { exp, log }
}

static TABLES: Tables = build_tables();

/// An element of GF(256).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(transparent)]
pub struct Gf256(pub u8);

impl Gf256 {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1);

    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inverse(self) -> Option<Self> {
        if self.0 == 0 {
            return None;
        }
        let l = TABLES.log[self.0 as usize] as usize;
        Some(Self(TABLES.exp[255 - l]))
    }

    /// `self^e` by table lookup.
    pub fn pow(self, e: u32) -> Self {
        if e == 0 {
            return Self::ONE;
        }
        if self.0 == 0 {
            return Self::ZERO;
        }
        let l = TABLES.log[self.0 as usize] as u64;
        Self(TABLES.exp[((l * e as u64) % 255) as usize])
    }
}

/// Product in GF(256).
#[inline]
pub fn field_mul(a: Gf256, b: Gf256) -> Gf256 {
    if a.0 == 0 || b.0 == 0 {
        return Gf256::ZERO;
    }
    let i = TABLES.log[a.0 as usize] as usize + TABLES.log[b.0 as usize] as usize;
    Gf256(TABLES.exp[i])
}

impl Add for Gf256 {
    type Output = Self;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Self) -> Self {
        Self(self.0 ^ rhs.0)
    }
}

impl AddAssign for Gf256 {
    #[inline]
    #[allow(clippy::suspicious_op_assign_impl)]
    fn add_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

impl Mul for Gf256 {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        field_mul(self, rhs)
    }
}

impl MulAssign for Gf256 {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = field_mul(*self, rhs);
    }
}

impl From<u8> for Gf256 {
    fn from(v: u8) -> Self {
        Self(v)
    }
}

impl From<Gf256> for u8 {
    fn from(v: Gf256) -> Self {
        v.0
    }
}

impl fmt::Debug for Gf256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl fmt::Display for Gf256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity() {
        assert_eq!(field_mul(Gf256(0x53), Gf256(0x01)), Gf256(0x53));
    }

    #[test]
    fn x_times_x7_reduces() {
        assert_eq!(field_mul(Gf256(0x02), Gf256(0x80)), Gf256(0x1B));
    }

    #[test]
    fn known_inverse_pair() {
        assert_eq!(field_mul(Gf256(0x53), Gf256(0xCA)), Gf256(0x01));
        // brute force: 0xCA is the only element that inverts 0x53
        let hits: Vec<u8> = (1..=255u8).filter(|&b| field_mul(Gf256(0x53), Gf256(b)) == Gf256::ONE).collect();
        assert_eq!(hits, vec![0xCA]);
        assert_eq!(Gf256(0x53).inverse(), Some(Gf256(0xCA)));
    }

    #[test]
    fn every_nonzero_element_has_unique_inverse() {
        assert_eq!(Gf256::ZERO.inverse(), None);
        for a in 1..=255u8 {
            let inv = Gf256(a).inverse().unwrap();
            assert_eq!(Gf256(a) * inv, Gf256::ONE);
            let count = (1..=255u8).filter(|&b| Gf256(a) * Gf256(b) == Gf256::ONE).count();
            assert_eq!(count, 1);
        }
    }

    #[test]
    fn table_mul_matches_shift_and_add() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(field_mul(Gf256(a), Gf256(b)).0, mul_slow(a, b));
            }
        }
    }

    #[test]
    fn pow_matches_repeated_mul() {
        let g = Gf256(0x57);
        let mut acc = Gf256::ONE;
        for e in 0..600 {
            assert_eq!(g.pow(e), acc);
            acc *= g;
        }
    }
}
