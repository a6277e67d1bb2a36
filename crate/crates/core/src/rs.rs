//! Reed-Solomon decoding with error correction (Gao's algorithm).
//!
//! Shares of a degree-`k` polynomial held by `n` parties form a Reed-Solomon
//! codeword. Up to `e` corrupted shares are tolerated whenever
//! `n >= k + 2e + 1`. The decoder additionally insists that the result agrees
//! with at least `n - max_errors` of the received points, so asking for fewer
//! errors than the code could correct turns excess corruption into a
//! [`DecodingFailure`](Error::DecodingFailure) instead of a silent miscorrection.

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};
use crate::poly::{lagrange_weights, Polynomial};

/// Decodes the polynomial of degree `<= degree` agreeing with all but at most
/// `max_errors` of `points`.
pub fn rs_decode(
    field: &PrimeField,
    points: &[(FieldElement, FieldElement)],
    degree: usize,
    max_errors: usize,
) -> Result<Polynomial> {
    let n = points.len();
    let needed = degree + 2 * max_errors + 1;
    if n < needed {
        return Err(Error::InsufficientPoints { needed, got: n });
    }
    let xs: Vec<FieldElement> = points.iter().map(|p| p.0).collect();
    let g0 = Polynomial::from_roots(field, &xs);
    let g1 = Polynomial::interpolate(field, points)?.trimmed();

    // Partial extended Euclid on (g0, g1), tracking only the g1 cofactor.
    let k = degree + 1;
    let stop = (n + k).div_ceil(2);
    let (mut r_prev, mut r_cur) = (g0, g1);
    let (mut v_prev, mut v_cur) = (Polynomial::zero(), Polynomial::constant(FieldElement::ONE));
    while r_cur.degree().is_some_and(|d| d >= stop) {
        let (q, r_next) = r_prev.div_rem(field, &r_cur)?;
        let v_next = v_prev.sub(field, &q.mul(field, &v_cur)).trimmed();
        r_prev = std::mem::replace(&mut r_cur, r_next);
        v_prev = std::mem::replace(&mut v_cur, v_next);
    }

    let fail = Error::DecodingFailure { max_errors };
    let (message, rem) = r_cur.div_rem(field, &v_cur).map_err(|_| fail.clone())?;
    if !rem.is_zero() || message.degree().is_some_and(|d| d > degree) {
        return Err(fail);
    }
    let agreeing = points.iter().filter(|(x, y)| message.eval(field, *x) == *y).count();
    if agreeing + max_errors < n {
        return Err(fail);
    }
    Ok(message.trimmed().padded(k))
}

/// Decodes many codewords that share the same evaluation points, returning
/// the value of each decoded polynomial at zero.
///
/// `rows[p]` holds the symbols received from point `p`, one per codeword.
/// Codewords are first checked against the interpolant of a trusted subset
/// of points; only those that disagree fall back to [`rs_decode`], whose error
/// positions then steer the trusted subset. The output equals per-codeword
/// `rs_decode(..)?.coeff(0)`.
pub fn rs_decode_constants(
    field: &PrimeField,
    xs: &[FieldElement],
    rows: &[Vec<FieldElement>],
    degree: usize,
    max_errors: usize,
) -> Result<Vec<FieldElement>> {
    let n = xs.len();
    if rows.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: rows.len() });
    }
    let needed = degree + 2 * max_errors + 1;
    if n < needed {
        return Err(Error::InsufficientPoints { needed, got: n });
    }
    let width = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::DimensionMismatch { expected: width, got: bad.len() });
    }

    let mut trusted: Vec<usize> = (0..=degree).collect();
    let mut basis = TrustedBasis::new(field, xs, &trusted)?;
    let mut out = Vec::with_capacity(width);
    let mut column = vec![FieldElement::ZERO; n];
    for c in 0..width {
        for (p, row) in rows.iter().enumerate() {
            column[p] = row[c];
        }
        if let Some(value) = basis.try_fast(field, &column, max_errors) {
            out.push(value);
            continue;
        }
        let points: Vec<_> = xs.iter().copied().zip(column.iter().copied()).collect();
        let poly = rs_decode(field, &points, degree, max_errors)?;
        let bad: Vec<bool> = points.iter().map(|(x, y)| poly.eval(field, *x) != *y).collect();
        let next: Vec<usize> = (0..n).filter(|&p| !bad[p]).take(degree + 1).collect();
        if next != trusted {
            trusted = next;
            basis = TrustedBasis::new(field, xs, &trusted)?;
        }
        out.push(poly.coeff(0));
    }
    Ok(out)
}

/// Lagrange weights that extend `degree + 1` trusted symbols to every point
/// and to zero.
struct TrustedBasis {
    trusted: Vec<usize>,
    at_points: Vec<Vec<FieldElement>>,
    at_zero: Vec<FieldElement>,
}

impl TrustedBasis {
    fn new(field: &PrimeField, xs: &[FieldElement], trusted: &[usize]) -> Result<Self> {
        let nodes: Vec<FieldElement> = trusted.iter().map(|&i| xs[i]).collect();
        let at_points = xs
            .iter()
            .map(|&x| lagrange_weights(field, &nodes, x))
            .collect::<Result<_>>()?;
        Ok(Self {
            trusted: trusted.to_vec(),
            at_points,
            at_zero: lagrange_weights(field, &nodes, FieldElement::ZERO)?,
        })
    }

    fn combine(&self, field: &PrimeField, weights: &[FieldElement], column: &[FieldElement]) -> FieldElement {
        self.trusted
            .iter()
            .zip(weights)
            .fold(FieldElement::ZERO, |acc, (&t, &w)| field.add(acc, field.mul(w, column[t])))
    }

    fn try_fast(&self, field: &PrimeField, column: &[FieldElement], max_errors: usize) -> Option<FieldElement> {
        let mut mismatches = 0;
        for (p, weights) in self.at_points.iter().enumerate() {
            if self.combine(field, weights, column) != column[p] {
                mismatches += 1;
                if mismatches > max_errors {
                    return None;
                }
            }
        }
        Some(self.combine(field, &self.at_zero, column))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn pts(field: &PrimeField, ys: &[u64]) -> Vec<(FieldElement, FieldElement)> {
        ys.iter()
            .enumerate()
            .map(|(i, &y)| (field.elem(i as u64 + 1), field.elem(y)))
            .collect()
    }

    #[test]
    fn corrects_single_error_over_f13() {
        let f = PrimeField::new(13).unwrap();
        // 2 + 3x at x = 1..5 is (5, 8, 11, 1, 4); position 3 corrupted.
        let received = pts(&f, &[5, 8, 0, 1, 4]);
        let poly = rs_decode(&f, &received, 1, 1).unwrap();
        assert_eq!(poly.coeffs(), &[f.elem(2), f.elem(3)]);
    }

    #[test]
    fn clean_word_matches_interpolation() {
        let f = PrimeField::new(13).unwrap();
        let received = pts(&f, &[5, 8, 11, 1, 4]);
        assert_eq!(rs_decode(&f, &received, 1, 0).unwrap().coeffs(), &[f.elem(2), f.elem(3)]);
    }

    #[test]
    fn too_many_errors_fail() {
        let f = PrimeField::mersenne61();
        let poly = Polynomial::new(vec![f.elem(7), f.elem(9), f.elem(11)]);
        let mut received: Vec<_> = (1..=7u64).map(|x| (f.elem(x), poly.eval(&f, f.elem(x)))).collect();
        received[0].1 = f.elem(1);
        received[4].1 = f.elem(2);
        received[5].1 = f.elem(3);
        assert!(matches!(
            rs_decode(&f, &received, 2, 2),
            Err(Error::DecodingFailure { max_errors: 2 })
        ));
    }

    #[test]
    fn insufficient_points() {
        let f = PrimeField::new(13).unwrap();
        let received = pts(&f, &[5, 8, 11]);
        assert!(matches!(
            rs_decode(&f, &received, 1, 1),
            Err(Error::InsufficientPoints { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn vector_decoder_agrees_with_scalar() {
        let f = PrimeField::mersenne61();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (n, degree, e, width) = (9, 2, 3, 40);
        let xs: Vec<_> = (1..=n as u64).map(|x| f.elem(x)).collect();
        let polys: Vec<_> = (0..width)
            .map(|_| Polynomial::new(f.random_vec(&mut rng, degree + 1)))
            .collect();
        let mut rows: Vec<Vec<FieldElement>> =
            xs.iter().map(|&x| polys.iter().map(|p| p.eval(&f, x)).collect()).collect();
        // Corrupt different positions in different codewords.
        #[allow(clippy::needless_range_loop)]
        for c in 0..width {
            for k in 0..(c % (e + 1)) {
                let p = (c + 2 * k) % n;
                rows[p][c] = f.random(&mut rng);
            }
        }
        let got = rs_decode_constants(&f, &xs, &rows, degree, e).unwrap();
        for (c, poly) in polys.iter().enumerate() {
            assert_eq!(got[c], poly.coeff(0));
        }
    }
}
