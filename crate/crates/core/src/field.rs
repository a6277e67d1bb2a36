//! Prime-field arithmetic over `F_q` with a runtime modulus.
//!
//! Every share, code symbol and quantized gradient entry in the crate is a
//! [`FieldElement`]. Elements carry no reference to their field; operations go
//! through a [`PrimeField`] value so that the same code runs over the
//! production Mersenne prime and over the tiny fields used in statistical
//! tests.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The Mersenne prime 2^61 - 1.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Largest modulus accepted; keeps `a + b` inside a `u64`.
const MAX_MODULUS: u64 = 1 << 63;

/// An element of `F_q`, always reduced into `[0, q)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Parameters of the prime field: the modulus and its bit width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct PrimeField {
    q: u64,
    bit_width: u32,
}

impl TryFrom<u64> for PrimeField {
    type Error = Error;

    fn try_from(q: u64) -> Result<Self> {
        PrimeField::new(q)
    }
}

impl From<PrimeField> for u64 {
    fn from(f: PrimeField) -> u64 {
        f.q
    }
}

impl Default for PrimeField {
    fn default() -> Self {
        Self::mersenne61()
    }
}

impl PrimeField {
    /// Creates the field `F_q`. `q` must be an odd prime below 2^63.
    pub fn new(q: u64) -> Result<Self> {
        if !(3..MAX_MODULUS).contains(&q) || !is_prime(q) {
            return Err(Error::NotPrime(q));
        }
        Ok(Self {
            q,
            bit_width: 64 - (q - 1).leading_zeros(),
        })
    }

    pub fn mersenne61() -> Self {
        Self {
            q: MERSENNE_61,
            bit_width: 61,
        }
    }

    /// Picks the field for an overflow bound: 2^61 - 1 when it is large
    /// enough, otherwise the smallest prime `>= bound`.
    pub fn for_bound(bound: u128) -> Result<Self> {
        if bound <= MERSENNE_61 as u128 {
            return Ok(Self::mersenne61());
        }
        let q = next_prime(bound).ok_or(Error::FieldTooSmall { required: bound })?;
        Self::new(q)
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.q
    }

    /// Bits needed to hold `q - 1`.
    #[inline]
    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    /// Serialized size of one element, `ceil(bit_width / 8)`.
    #[inline]
    pub fn element_bytes(&self) -> usize {
        self.bit_width.div_ceil(8) as usize
    }

    /// Reduces an arbitrary `u64`.
    #[inline]
    pub fn elem(&self, v: u64) -> FieldElement {
        FieldElement(v % self.q)
    }

    /// Wraps a value already known to be reduced.
    #[inline]
    pub fn elem_reduced(&self, v: u64) -> Result<FieldElement> {
        if v < self.q {
            Ok(FieldElement(v))
        } else {
            Err(Error::NotReduced { value: v, modulus: self.q })
        }
    }

    #[inline]
    pub fn zero(&self) -> FieldElement {
        FieldElement::ZERO
    }

    #[inline]
    pub fn one(&self) -> FieldElement {
        FieldElement::ONE
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = a.0 + b.0;
        FieldElement(if s >= self.q { s - self.q } else { s })
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(if a.0 >= b.0 { a.0 - b.0 } else { a.0 + self.q - b.0 })
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        FieldElement(if a.0 == 0 { 0 } else { self.q - a.0 })
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let p = a.0 as u128 * b.0 as u128;
        if self.q == MERSENNE_61 {
            // p < 2^122, fold the high bits twice.
            let lo = (p as u64) & MERSENNE_61;
            let hi = (p >> 61) as u64;
            let s = lo + hi;
            let s = (s & MERSENNE_61) + (s >> 61);
            FieldElement(if s >= MERSENNE_61 { s - MERSENNE_61 } else { s })
        } else {
            FieldElement((p % self.q as u128) as u64)
        }
    }

    #[inline]
    pub fn square(&self, a: FieldElement) -> FieldElement {
        self.mul(a, a)
    }

    pub fn pow(&self, base: FieldElement, mut exp: u64) -> FieldElement {
        let mut acc = FieldElement::ONE;
        let mut b = base;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        if a.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(self.pow(a, self.q - 2))
    }

    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// Uniform element.
    #[inline]
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement(rng.random_range(0..self.q))
    }

    pub fn random_vec<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Vec<FieldElement> {
        (0..len).map(|_| self.random(rng)).collect()
    }

    /// Largest magnitude representable by the signed embedding, `(q-1)/2`.
    #[inline]
    pub fn signed_bound(&self) -> u64 {
        (self.q - 1) / 2
    }

    /// Maps `x` to `x` when non-negative and to `q + x` otherwise.
    pub fn embed_signed(&self, x: i64) -> Result<FieldElement> {
        let limit = self.signed_bound();
        if x.unsigned_abs() > limit {
            return Err(Error::EmbeddingOverflow { value: x as i128, limit });
        }
        Ok(if x >= 0 {
            FieldElement(x as u64)
        } else {
            FieldElement(self.q - x.unsigned_abs())
        })
    }

    /// Inverse of [`embed_signed`](Self::embed_signed): values above
    /// `(q-1)/2` are read as negative.
    #[inline]
    pub fn unembed_signed(&self, e: FieldElement) -> i64 {
        if e.0 <= self.signed_bound() {
            e.0 as i64
        } else {
            -((self.q - e.0) as i64)
        }
    }

    pub fn embed_vec(&self, xs: &[i64]) -> Result<Vec<FieldElement>> {
        xs.iter().map(|&x| self.embed_signed(x)).collect()
    }

    pub fn unembed_vec(&self, es: &[FieldElement]) -> Vec<i64> {
        es.iter().map(|&e| self.unembed_signed(e)).collect()
    }

    /// Element-wise `a + b`.
    pub fn add_vec(&self, a: &[FieldElement], b: &[FieldElement]) -> Vec<FieldElement> {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(&x, &y)| self.add(x, y)).collect()
    }

    pub fn sub_vec(&self, a: &[FieldElement], b: &[FieldElement]) -> Vec<FieldElement> {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(&x, &y)| self.sub(x, y)).collect()
    }

    pub fn add_assign_vec(&self, acc: &mut [FieldElement], b: &[FieldElement]) {
        debug_assert_eq!(acc.len(), b.len());
        for (x, &y) in acc.iter_mut().zip(b) {
            *x = self.add(*x, y);
        }
    }

    pub fn scale_vec(&self, a: &[FieldElement], s: FieldElement) -> Vec<FieldElement> {
        a.iter().map(|&x| self.mul(x, s)).collect()
    }

    /// Squared Euclidean norm of `a - b`, computed in the field.
    pub fn squared_distance(&self, a: &[FieldElement], b: &[FieldElement]) -> FieldElement {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).fold(FieldElement::ZERO, |acc, (&x, &y)| {
            let diff = self.sub(x, y);
            self.add(acc, self.mul(diff, diff))
        })
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `>= bound` that fits the accepted modulus range.
pub fn next_prime(bound: u128) -> Option<u64> {
    let mut c = bound.max(3);
    if c.is_multiple_of(2) {
        c += 1;
    }
    while c < MAX_MODULUS as u128 {
        if is_prime(c as u64) {
            return Some(c as u64);
        }
        c += 2;
    }
    None
}
