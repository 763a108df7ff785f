//! Polynomials over GF(256) and irreducibility testing.

use std::fmt;
use std::ops::{Add, Mul};

use super::field::Gf256;
use super::FieldHashError;

/// A polynomial over GF(256).
///
/// Stored lowest-order coefficient first with trailing zeros trimmed, so the
/// zero polynomial has no coefficients and a nonzero polynomial always has a
/// nonzero leading coefficient. The public constructors and
/// [`coefficients`](Self::coefficients) use highest-order-first order.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct FieldPolynomial {
    low_first: Vec<Gf256>,
}

impl FieldPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::monomial(0, Gf256::ONE)
    }

    /// The polynomial `x`.
    pub fn x() -> Self {
        Self::monomial(1, Gf256::ONE)
    }

    pub fn monomial(degree: usize, coeff: Gf256) -> Self {
        let mut low_first = vec![Gf256::ZERO; degree + 1];
        low_first[degree] = coeff;
        Self::from_low_first(low_first)
    }

    /// Builds a polynomial from coefficients ordered highest-order first.
    /// Leading zeros are allowed and trimmed.
    pub fn from_coefficients(high_first: &[Gf256]) -> Self {
        Self::from_low_first(high_first.iter().rev().copied().collect())
    }

    /// Same as [`from_coefficients`](Self::from_coefficients) with raw bytes.
    pub fn from_bytes(high_first: &[u8]) -> Self {
        Self::from_low_first(high_first.iter().rev().map(|&b| Gf256(b)).collect())
    }

    pub(crate) fn from_low_first(mut low_first: Vec<Gf256>) -> Self {
        while low_first.last().is_some_and(|c| c.is_zero()) {
            low_first.pop();
        }
        Self { low_first }
    }

    /// Coefficients highest-order first; empty for the zero polynomial.
    pub fn coefficients(&self) -> Vec<Gf256> {
        self.low_first.iter().rev().copied().collect()
    }

    pub(crate) fn low_first(&self) -> &[Gf256] {
        &self.low_first
    }

    /// Coefficient of `x^i` (zero past the degree).
    pub fn coeff(&self, i: usize) -> Gf256 {
        self.low_first.get(i).copied().unwrap_or(Gf256::ZERO)
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.low_first.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.low_first.is_empty()
    }

    pub fn leading(&self) -> Gf256 {
        self.low_first.last().copied().unwrap_or(Gf256::ZERO)
    }

    pub fn is_monic(&self) -> bool {
        self.leading() == Gf256::ONE
    }

    /// Scales to a monic polynomial. The zero polynomial is returned as is.
    pub fn to_monic(&self) -> Self {
        match self.leading().inverse() {
            Some(inv) => Self::from_low_first(self.low_first.iter().map(|&c| c * inv).collect()),
            None => Self::zero(),
        }
    }

    /// Quotient and remainder. Panics on a zero divisor; see [`poly_mod`] for
    /// the checked variant.
    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        let dd = divisor.degree().expect("division by the zero polynomial");
        let inv = divisor.leading().inverse().expect("nonzero leading coefficient");
        let mut rem = self.low_first.clone();
        if rem.len() <= dd {
            return (Self::zero(), self.clone());
        }
        let mut quot = vec![Gf256::ZERO; rem.len() - dd];
        for i in (dd..rem.len()).rev() {
            let c = rem[i];
            if c.is_zero() {
                continue;
            }
            let q = c * inv;
            quot[i - dd] = q;
            let base = i - dd;
            for (j, &d) in divisor.low_first.iter().enumerate() {
                rem[base + j] += q * d;
            }
        }
        rem.truncate(dd);
        (Self::from_low_first(quot), Self::from_low_first(rem))
    }

    pub fn gcd(&self, other: &Self) -> Self {
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r;
        }
        a.to_monic()
    }

    /// Evaluates at `x` by Horner's rule.
    pub fn eval(&self, x: Gf256) -> Gf256 {
        self.low_first.iter().rev().fold(Gf256::ZERO, |acc, &c| acc * x + c)
    }
}

/// Remainder of `numerator` divided by `modulus`.
pub fn poly_mod(numerator: &FieldPolynomial, modulus: &FieldPolynomial) -> Result<FieldPolynomial, FieldHashError> {
    if modulus.is_zero() {
        return Err(FieldHashError::ZeroModulus);
    }
    Ok(numerator.div_rem(modulus).1)
}

impl Add for &FieldPolynomial {
    type Output = FieldPolynomial;
    fn add(self, rhs: Self) -> FieldPolynomial {
        let n = self.low_first.len().max(rhs.low_first.len());
        FieldPolynomial::from_low_first((0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl Mul for &FieldPolynomial {
    type Output = FieldPolynomial;
    fn mul(self, rhs: Self) -> FieldPolynomial {
        if self.is_zero() || rhs.is_zero() {
            return FieldPolynomial::zero();
        }
        let mut out = vec![Gf256::ZERO; self.low_first.len() + rhs.low_first.len() - 1];
        for (i, &a) in self.low_first.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, &b) in rhs.low_first.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        FieldPolynomial::from_low_first(out)
    }
}

impl fmt::Debug for FieldPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, c) in self.low_first.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match (i, c.0) {
                (0, v) => write!(f, "{v:#04x}")?,
                (_, 1) => write!(f, "x^{i}")?,
                (_, v) => write!(f, "{v:#04x}*x^{i}")?,
            }
        }
        Ok(())
    }
}

/// Arithmetic modulo a fixed monic polynomial, the workhorse of the
/// irreducibility tests.
pub(crate) struct MonicModulus<'a> {
    p: &'a [Gf256],
    d: usize,
}

impl<'a> MonicModulus<'a> {
    pub(crate) fn new(p: &'a FieldPolynomial) -> Self {
        debug_assert!(p.is_monic());
        let d = p.degree().unwrap();
        Self { p: p.low_first(), d }
    }

    /// Reduces a low-first coefficient vector in place and trims it to `d` entries.
    fn reduce(&self, v: &mut Vec<Gf256>) {
        let d = self.d;
        for i in (d..v.len()).rev() {
            let c = v[i];
            if c.is_zero() {
                continue;
            }
            let base = i - d;
            for (j, &pj) in self.p[..d].iter().enumerate() {
                v[base + j] += c * pj;
            }
        }
        v.resize(d, Gf256::ZERO);
    }

    /// `v^256 mod p`. Squaring is additive in characteristic 2, so each
    /// squaring just spreads `a_i^2` to position `2i` before reducing.
    fn frobenius(&self, v: &[Gf256]) -> Vec<Gf256> {
        let mut cur = v.to_vec();
        for _ in 0..8 {
            let mut sq = vec![Gf256::ZERO; 2 * cur.len()];
            for (i, &c) in cur.iter().enumerate() {
                sq[2 * i] = c * c;
            }
            self.reduce(&mut sq);
            cur = sq;
        }
        cur
    }

    /// `x mod p` as a length-`d` vector.
    fn x(&self) -> Vec<Gf256> {
        let mut v = vec![Gf256::ZERO; 2.max(self.d)];
        v[1] = Gf256::ONE;
        self.reduce(&mut v);
        v
    }

    /// Returns `gcd(t - x, p)` is nontrivial, where `t` holds `x^{256^k} mod p`.
    fn shares_factor_with_x_diff(&self, t: &[Gf256], x: &[Gf256]) -> bool {
        let diff = FieldPolynomial::from_low_first(t.iter().zip(x).map(|(&a, &b)| a + b).collect());
        let p = FieldPolynomial::from_low_first(self.p.to_vec());
        let g = diff.gcd(&p);
        g.degree() != Some(0)
    }
}

fn check_monic_nonconstant(p: &FieldPolynomial) -> Result<usize, FieldHashError> {
    match p.degree() {
        None | Some(0) => Err(FieldHashError::ConstantPolynomial),
        Some(_) if !p.is_monic() => Err(FieldHashError::NotMonic),
        Some(d) => Ok(d),
    }
}

fn prime_divisors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut f = 2;
    while f * f <= n {
        if n % f == 0 {
            out.push(f);
            while n % f == 0 {
                n /= f;
            }
        }
        f += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Rabin's irreducibility test over GF(256).
///
/// A monic `p` of degree `d` is irreducible iff `x^{256^d} = x (mod p)` and
/// `gcd(x^{256^{d/r}} - x, p) = 1` for every prime `r` dividing `d`.
pub fn is_irreducible(p: &FieldPolynomial) -> Result<bool, FieldHashError> {
    let d = check_monic_nonconstant(p)?;
    if d == 1 {
        return Ok(true);
    }
    let m = MonicModulus::new(p);
    let x = m.x();
    let checkpoints: Vec<usize> = prime_divisors(d).into_iter().map(|r| d / r).collect();
    let mut t = x.clone();
    for k in 1..=d {
        t = m.frobenius(&t);
        if checkpoints.contains(&k) && m.shares_factor_with_x_diff(&t, &x) {
            return Ok(false);
        }
    }
    Ok(t == x)
}

/// Ben-Or's test: `p` is irreducible iff it has no factor of degree `k` for
/// any `k <= d/2`, detected through `gcd(x^{256^k} - x, p)`. Reducible inputs
/// usually exit after a few rounds, which makes this the fast path for
/// searching irreducible moduli.
pub(crate) fn is_irreducible_ben_or(p: &FieldPolynomial) -> Result<bool, FieldHashError> {
    let d = check_monic_nonconstant(p)?;
    if d == 1 {
        return Ok(true);
    }
    if p.coeff(0).is_zero() {
        return Ok(false);
    }
    let m = MonicModulus::new(p);
    let x = m.x();
    let mut t = x.clone();
    for _ in 1..=d / 2 {
        t = m.frobenius(&t);
        if m.shares_factor_with_x_diff(&t, &x) {
            return Ok(false);
        }
    }
    Ok(true)
}
