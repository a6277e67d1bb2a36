//! Univariate polynomials over `F_q` and Lagrange interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};

/// Coefficients in ascending order, constant term first. Trailing zeros are
/// allowed so that a sharing polynomial keeps its nominal degree.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<FieldElement>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<FieldElement>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: FieldElement) -> Self {
        Self { coeffs: vec![c] }
    }

    /// `c_0 + x c_1 + ... + x^k c_k` with the given constant and uniformly
    /// random higher coefficients.
    pub fn random_with_constant<R: rand::Rng + ?Sized>(
        field: &PrimeField,
        constant: FieldElement,
        degree: usize,
        rng: &mut R,
    ) -> Self {
        let mut coeffs = Vec::with_capacity(degree + 1);
        coeffs.push(constant);
        coeffs.extend((0..degree).map(|_| field.random(rng)));
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<FieldElement> {
        self.coeffs
    }

    /// Coefficient of `x^i`, zero past the end.
    pub fn coeff(&self, i: usize) -> FieldElement {
        self.coeffs.get(i).copied().unwrap_or(FieldElement::ZERO)
    }

    /// Degree ignoring trailing zeros; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|c| !c.is_zero())
    }

    pub fn is_zero(&self) -> bool {
        self.degree().is_none()
    }

    pub fn trimmed(mut self) -> Self {
        let len = self.degree().map_or(0, |d| d + 1);
        self.coeffs.truncate(len);
        self
    }

    /// Pads with zeros up to `len` coefficients.
    pub fn padded(mut self, len: usize) -> Self {
        if self.coeffs.len() < len {
            self.coeffs.resize(len, FieldElement::ZERO);
        }
        self
    }

    /// Horner evaluation.
    pub fn eval(&self, field: &PrimeField, x: FieldElement) -> FieldElement {
        self.coeffs
            .iter()
            .rev()
            .fold(FieldElement::ZERO, |acc, &c| field.add(field.mul(acc, x), c))
    }

    pub fn add(&self, field: &PrimeField, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..len).map(|i| field.add(self.coeff(i), other.coeff(i))).collect();
        Self { coeffs }
    }

    pub fn sub(&self, field: &PrimeField, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..len).map(|i| field.sub(self.coeff(i), other.coeff(i))).collect();
        Self { coeffs }
    }

    pub fn scale(&self, field: &PrimeField, s: FieldElement) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|&c| field.mul(c, s)).collect(),
        }
    }

    pub fn mul(&self, field: &PrimeField, other: &Self) -> Self {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Self::zero();
        }
        let mut out = vec![FieldElement::ZERO; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] = field.add(out[i + j], field.mul(a, b));
            }
        }
        Self { coeffs: out }
    }

    /// Euclidean division; returns `(quotient, remainder)`.
    pub fn div_rem(&self, field: &PrimeField, divisor: &Self) -> Result<(Self, Self)> {
        let dd = divisor.degree().ok_or(Error::DivisionByZero)?;
        let lead_inv = field.inv(divisor.coeffs[dd])?;
        let mut rem = self.clone().trimmed();
        let Some(nd) = rem.degree() else {
            return Ok((Self::zero(), Self::zero()));
        };
        if nd < dd {
            return Ok((Self::zero(), rem));
        }
        let mut quot = vec![FieldElement::ZERO; nd - dd + 1];
        for k in (0..=nd - dd).rev() {
            let c = field.mul(rem.coeffs[k + dd], lead_inv);
            quot[k] = c;
            if c.is_zero() {
                continue;
            }
            for i in 0..=dd {
                rem.coeffs[k + i] = field.sub(rem.coeffs[k + i], field.mul(c, divisor.coeffs[i]));
            }
        }
        Ok((Self { coeffs: quot }.trimmed(), rem.trimmed()))
    }

    /// `prod_i (x - r_i)`.
    pub fn from_roots(field: &PrimeField, roots: &[FieldElement]) -> Self {
        let mut coeffs = vec![FieldElement::ONE];
        for &r in roots {
            let neg_r = field.neg(r);
            let mut next = vec![FieldElement::ZERO; coeffs.len() + 1];
            for (i, &c) in coeffs.iter().enumerate() {
                next[i + 1] = field.add(next[i + 1], c);
                next[i] = field.add(next[i], field.mul(c, neg_r));
            }
            coeffs = next;
        }
        Self { coeffs }
    }

    /// The unique polynomial of degree `< points.len()` through `points`
    /// (Newton divided differences).
    pub fn interpolate(field: &PrimeField, points: &[(FieldElement, FieldElement)]) -> Result<Self> {
        ensure_distinct(points)?;
        let n = points.len();
        let mut dd: Vec<FieldElement> = points.iter().map(|p| p.1).collect();
        for level in 1..n {
            for i in (level..n).rev() {
                let num = field.sub(dd[i], dd[i - 1]);
                let den = field.sub(points[i].0, points[i - level].0);
                dd[i] = field.mul(num, field.inv(den)?);
            }
        }
        // Expand the Newton form from the innermost term outwards.
        let mut poly = Self::zero();
        for i in (0..n).rev() {
            let shifted = poly.mul(field, &Self::new(vec![field.neg(points[i].0), FieldElement::ONE]));
            poly = shifted.add(field, &Self::constant(dd[i]));
        }
        Ok(poly.padded(n))
    }
}

fn ensure_distinct(points: &[(FieldElement, FieldElement)]) -> Result<()> {
    let mut xs: Vec<FieldElement> = points.iter().map(|p| p.0).collect();
    xs.sort_unstable();
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DuplicateEvalPoint);
    }
    Ok(())
}

/// Value at `at` of the polynomial of degree `< points.len()` through
/// `points`.
pub fn lagrange_interpolate(
    field: &PrimeField,
    points: &[(FieldElement, FieldElement)],
    at: FieldElement,
) -> Result<FieldElement> {
    if points.is_empty() {
        return Err(Error::InsufficientPoints { needed: 1, got: 0 });
    }
    ensure_distinct(points)?;
    let weights = lagrange_weights(field, &points.iter().map(|p| p.0).collect::<Vec<_>>(), at)?;
    Ok(points
        .iter()
        .zip(&weights)
        .fold(FieldElement::ZERO, |acc, (p, &w)| field.add(acc, field.mul(p.1, w))))
}

/// Lagrange basis values `L_i(at)` for the nodes `xs`.
pub fn lagrange_weights(field: &PrimeField, xs: &[FieldElement], at: FieldElement) -> Result<Vec<FieldElement>> {
    let mut weights = Vec::with_capacity(xs.len());
    for (i, &xi) in xs.iter().enumerate() {
        let mut num = FieldElement::ONE;
        let mut den = FieldElement::ONE;
        for (j, &xj) in xs.iter().enumerate() {
            if i == j {
                continue;
            }
            num = field.mul(num, field.sub(at, xj));
            den = field.mul(den, field.sub(xi, xj));
        }
        let den_inv = field.inv(den).map_err(|_| Error::DuplicateEvalPoint)?;
        weights.push(field.mul(num, den_inv));
    }
    Ok(weights)
}
