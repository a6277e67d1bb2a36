//! Shamir sharing of field vectors, re-randomization polynomials and pads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::randomness::{Purpose, SharedRandomness};
use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};
use crate::party::{ClientId, Party};
use crate::poly::{lagrange_weights, Polynomial};
use crate::rs::rs_decode_constants;

/// The evaluation point dedicated to a client. `alpha` is never zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub client_id: ClientId,
    pub alpha: FieldElement,
}

impl EvalPoint {
    /// `alpha_i = i`.
    pub fn for_client(field: &PrimeField, client_id: ClientId) -> Self {
        Self {
            client_id,
            alpha: field.elem(client_id as u64),
        }
    }
}

/// Evaluation points for clients `1..=n`.
pub fn eval_points(field: &PrimeField, n: usize) -> Vec<EvalPoint> {
    (1..=n).map(|i| EvalPoint::for_client(field, i)).collect()
}

fn check_points(points: &[EvalPoint]) -> Result<()> {
    let mut alphas: Vec<FieldElement> = points.iter().map(|p| p.alpha).collect();
    if alphas.iter().any(|a| a.is_zero()) {
        return Err(Error::ConfigInvalid("evaluation point 0 is reserved for the secret".into()));
    }
    alphas.sort_unstable();
    if alphas.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DuplicateEvalPoint);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareKind {
    GradientShare,
    DistanceShare,
    PaddedGradientShare,
    MixtureShare,
    QueryShare,
    ResponseShare,
}

/// Evaluation at `owner`'s point of a polynomial dealt by `source`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    pub owner: ClientId,
    pub source: Party,
    pub kind: ShareKind,
    pub alpha: FieldElement,
    pub payload: Vec<FieldElement>,
    pub degree: usize,
}

/// One degree-`z` polynomial per coordinate with the secret as constant term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VectorSharing {
    polys: Vec<Polynomial>,
}

impl VectorSharing {
    /// `secret + x r_1 + ... + x^z r_z` with fresh uniform `r_t` per
    /// coordinate.
    pub fn new<R: Rng + ?Sized>(field: &PrimeField, secret: &[FieldElement], z: usize, rng: &mut R) -> Self {
        Self {
            polys: secret
                .iter()
                .map(|&s| Polynomial::random_with_constant(field, s, z, rng))
                .collect(),
        }
    }

    pub fn from_polys(polys: Vec<Polynomial>) -> Self {
        Self { polys }
    }

    pub fn polys(&self) -> &[Polynomial] {
        &self.polys
    }

    pub fn eval(&self, field: &PrimeField, x: FieldElement) -> Vec<FieldElement> {
        self.polys.iter().map(|p| p.eval(field, x)).collect()
    }

    pub fn secret(&self) -> Vec<FieldElement> {
        self.polys.iter().map(|p| p.coeff(0)).collect()
    }
}

/// Splits `secret` into one share per evaluation point.
pub fn share_vector<R: Rng + ?Sized>(
    field: &PrimeField,
    secret: &[FieldElement],
    z: usize,
    points: &[EvalPoint],
    source: Party,
    kind: ShareKind,
    rng: &mut R,
) -> Result<Vec<Share>> {
    if z == 0 {
        return Err(Error::ConfigInvalid("privacy threshold z must be at least 1".into()));
    }
    if points.len() <= z {
        return Err(Error::InsufficientClients { n: points.len(), z });
    }
    check_points(points)?;
    let sharing = VectorSharing::new(field, secret, z, rng);
    Ok(points
        .iter()
        .map(|p| Share {
            owner: p.client_id,
            source,
            kind,
            alpha: p.alpha,
            payload: sharing.eval(field, p.alpha),
            degree: z,
        })
        .collect())
}

/// Interpolates the shared vector from error-free shares (at least
/// `degree + 1` of them).
pub fn reconstruct(field: &PrimeField, shares: &[Share]) -> Result<Vec<FieldElement>> {
    let first = shares.first().ok_or(Error::InsufficientPoints { needed: 1, got: 0 })?;
    let needed = first.degree + 1;
    if shares.len() < needed {
        return Err(Error::InsufficientPoints { needed, got: shares.len() });
    }
    let used = &shares[..needed];
    let xs: Vec<FieldElement> = used.iter().map(|s| s.alpha).collect();
    let weights = lagrange_weights(field, &xs, FieldElement::ZERO)?;
    let d = first.payload.len();
    let mut out = vec![FieldElement::ZERO; d];
    for (share, &w) in used.iter().zip(&weights) {
        if share.payload.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: share.payload.len() });
        }
        for (o, &v) in out.iter_mut().zip(&share.payload) {
            *o = field.add(*o, field.mul(v, w));
        }
    }
    Ok(out)
}

/// Reconstruction tolerating up to `max_errors` corrupted shares.
pub fn reconstruct_robust(field: &PrimeField, shares: &[Share], max_errors: usize) -> Result<Vec<FieldElement>> {
    let first = shares.first().ok_or(Error::InsufficientPoints { needed: 1, got: 0 })?;
    let xs: Vec<FieldElement> = shares.iter().map(|s| s.alpha).collect();
    let rows: Vec<Vec<FieldElement>> = shares.iter().map(|s| s.payload.clone()).collect();
    rs_decode_constants(field, &xs, &rows, first.degree, max_errors)
}

/// `x r_1 + ... + x^{degree} r_degree` with coefficients drawn from the
/// shared stream for `purpose`; identical at every client.
pub fn zero_constant_poly(field: &PrimeField, degree: usize, sr: &SharedRandomness, purpose: Purpose) -> Polynomial {
    let mut rng = sr.stream(purpose);
    Polynomial::random_with_constant(field, FieldElement::ZERO, degree, &mut rng)
}

/// The degree-`2z` re-randomizer `lambda(x)` added to distance shares.
pub fn rerandomizer(field: &PrimeField, z: usize, sr: &SharedRandomness, purpose: Purpose) -> Polynomial {
    zero_constant_poly(field, 2 * z, sr, purpose)
}

/// Per-coordinate zero-constant polynomials of degree `2z`, evaluated at
/// `alpha`, used to mask sum-retrieval responses.
pub fn vector_mask_at(
    field: &PrimeField,
    z: usize,
    d: usize,
    sr: &SharedRandomness,
    purpose: Purpose,
    alpha: FieldElement,
) -> Vec<FieldElement> {
    let mut rng = sr.stream(purpose);
    let degree = 2 * z;
    (0..d)
        .map(|_| {
            // Coefficients r_1..r_2z for this coordinate, evaluated directly.
            let mut acc = FieldElement::ZERO;
            let mut power = alpha;
            for _ in 0..degree {
                acc = field.add(acc, field.mul(field.random(&mut rng), power));
                power = field.mul(power, alpha);
            }
            acc
        })
        .collect()
}

/// One-time pad `m_j` for the current query, shared by all clients.
pub fn pad(field: &PrimeField, d: usize, sr: &SharedRandomness, purpose: Purpose) -> Vec<FieldElement> {
    let mut rng = sr.stream(purpose);
    field.random_vec(&mut rng, d)
}

/// Adds the pad to every share: `[g_l]_i + m = [g_l + m]_i`.
pub fn pad_shares(field: &PrimeField, shares: &[Vec<FieldElement>], pad: &[FieldElement]) -> Vec<Vec<FieldElement>> {
    shares.iter().map(|s| field.add_vec(s, pad)).collect()
}
