//! Verifiable sharing with a symmetric bivariate polynomial.
//!
//! The dealer picks `S(x, y) = S(y, x)` of degree `z` in each variable with
//! `S(0, 0)` equal to the secret and hands client `i` the row
//! `f_i(y) = S(alpha_i, y)`. The share used by the rest of the protocol is
//! `f_i(0)`, a point on the degree-`z` polynomial `S(0, y)`.
//!
//! Verification runs one dispute phase:
//!
//! 1. every pair of clients exchanges `f_k(alpha_j)`, which must equal
//!    `f_j(alpha_k)`;
//! 2. clients broadcast the peers whose values disagreed;
//! 3. the dealer broadcasts `S(alpha_j, alpha_k)` for every disputed pair and a
//!    client whose row contradicts one of those values complains;
//! 4. the dealer publishes the rows of complainers; a client whose row
//!    contradicts a published row complains as well, and its row is published
//!    in turn.
//!
//! At least `b + 1` complainers exclude the dealer. Otherwise complainers
//! adopt their published rows, and all honest rows lie on one polynomial.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::shamir::EvalPoint;
use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};
use crate::party::{ClientId, Party};
use crate::protocol::transcript::{Envelope, MessageKind, Step, Transcript};

/// Coefficients of one symmetric bivariate polynomial per coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BivariateDealing {
    z: usize,
    dim: usize,
    /// Coordinate-major, `(z + 1)^2` entries each, `s[a * (z + 1) + c]` being
    /// the coefficient of `x^a y^c`.
    coeffs: Vec<FieldElement>,
}

impl BivariateDealing {
    pub fn deal<R: Rng + ?Sized>(field: &PrimeField, secret: &[FieldElement], z: usize, rng: &mut R) -> Self {
        let w = z + 1;
        let mut coeffs = vec![FieldElement::ZERO; secret.len() * w * w];
        for (u, &s) in secret.iter().enumerate() {
            let block = &mut coeffs[u * w * w..(u + 1) * w * w];
            for a in 0..w {
                for c in a..w {
                    let v = if a == 0 && c == 0 { s } else { field.random(rng) };
                    block[a * w + c] = v;
                    block[c * w + a] = v;
                }
            }
        }
        Self {
            z,
            dim: secret.len(),
            coeffs,
        }
    }

    pub fn degree(&self) -> usize {
        self.z
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn secret(&self) -> Vec<FieldElement> {
        let w = self.z + 1;
        (0..self.dim).map(|u| self.coeffs[u * w * w]).collect()
    }

    /// `f(y) = S(alpha, y)`.
    pub fn row(&self, field: &PrimeField, alpha: FieldElement) -> Row {
        let w = self.z + 1;
        let powers = powers(field, alpha, w);
        let mut out = vec![FieldElement::ZERO; self.dim * w];
        for u in 0..self.dim {
            let block = &self.coeffs[u * w * w..(u + 1) * w * w];
            for c in 0..w {
                let mut acc = FieldElement::ZERO;
                for (a, &p) in powers.iter().enumerate() {
                    acc = field.add(acc, field.mul(block[a * w + c], p));
                }
                out[u * w + c] = acc;
            }
        }
        Row { z: self.z, coeffs: out }
    }

    /// `S(x, y)` per coordinate.
    pub fn value(&self, field: &PrimeField, x: FieldElement, y: FieldElement) -> Vec<FieldElement> {
        self.row(field, x).eval(field, y)
    }
}

fn powers(field: &PrimeField, x: FieldElement, count: usize) -> Vec<FieldElement> {
    let mut out = Vec::with_capacity(count);
    let mut p = FieldElement::ONE;
    for _ in 0..count {
        out.push(p);
        p = field.mul(p, x);
    }
    out
}

/// A client's row: one degree-`z` polynomial in `y` per coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    z: usize,
    coeffs: Vec<FieldElement>,
}

impl Row {
    pub fn random<R: Rng + ?Sized>(field: &PrimeField, dim: usize, z: usize, rng: &mut R) -> Self {
        Self {
            z,
            coeffs: field.random_vec(rng, dim * (z + 1)),
        }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len() / (self.z + 1)
    }

    /// Flat coefficients, as transmitted.
    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    pub fn eval(&self, field: &PrimeField, y: FieldElement) -> Vec<FieldElement> {
        self.coeffs
            .chunks_exact(self.z + 1)
            .map(|c| c.iter().rev().fold(FieldElement::ZERO, |acc, &k| field.add(field.mul(acc, y), k)))
            .collect()
    }

    /// The Shamir share `f(0)`.
    pub fn share(&self) -> Vec<FieldElement> {
        self.coeffs.iter().step_by(self.z + 1).copied().collect()
    }
}

/// What a dealer sends; honest dealers send rows of `base` to everyone.
/// Disputes and publications are always answered from `base`.
#[derive(Clone, Debug)]
pub struct Dealer {
    base: BivariateDealing,
    overrides: BTreeMap<ClientId, Row>,
}

impl Dealer {
    pub fn honest(base: BivariateDealing) -> Self {
        Self {
            base,
            overrides: BTreeMap::new(),
        }
    }

    /// A dealer that sends `overrides[i]` instead of the true row to client `i`.
    pub fn with_overrides(base: BivariateDealing, overrides: BTreeMap<ClientId, Row>) -> Self {
        Self { base, overrides }
    }

    /// Every client except the dealer gets a row of an unrelated sharing.
    pub fn inconsistent<R: Rng + ?Sized>(
        field: &PrimeField,
        base: BivariateDealing,
        dealer: ClientId,
        holders: &[EvalPoint],
        rng: &mut R,
    ) -> Self {
        let (z, dim) = (base.z, base.dim);
        let overrides = holders
            .iter()
            .filter(|p| p.client_id != dealer)
            .map(|p| (p.client_id, Row::random(field, dim, z, rng)))
            .collect();
        Self { base, overrides }
    }

    pub fn base(&self) -> &BivariateDealing {
        &self.base
    }

    pub fn row_for(&self, field: &PrimeField, p: &EvalPoint) -> Row {
        self.overrides
            .get(&p.client_id)
            .cloned()
            .unwrap_or_else(|| self.base.row(field, p.alpha))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VssOutcome {
    pub dealer: ClientId,
    /// Distinct clients that complained, ascending.
    pub complainers: Vec<ClientId>,
    /// Final `f_i(0)` per holder; empty when the dealer was excluded.
    pub shares: BTreeMap<ClientId, Vec<FieldElement>>,
}

impl VssOutcome {
    pub fn verdict(&self, b: usize) -> Result<()> {
        verdict(self.dealer, self.complainers.len(), b)
    }

    pub fn accepted(&self, b: usize) -> bool {
        self.verdict(b).is_ok()
    }
}

/// A dealer with more than `b` complainers cannot be honest.
pub fn verdict(dealer: ClientId, complaints: usize, b: usize) -> Result<()> {
    if complaints > b {
        Err(Error::DealerExcluded { dealer, complaints })
    } else {
        Ok(())
    }
}

/// Runs verification of one dealing among `holders` (which include the
/// dealer). Clients in `false_complainers` send garbage cross-checks, report
/// every peer and complain unconditionally.
#[allow(clippy::too_many_arguments)]
pub fn run_vss<R: Rng + ?Sized>(
    field: &PrimeField,
    dealer_id: ClientId,
    dealer: &Dealer,
    holders: &[EvalPoint],
    b: usize,
    false_complainers: &BTreeSet<ClientId>,
    rng: &mut R,
    transcript: &mut Transcript,
) -> VssOutcome {
    let dim = dealer.base.dim;
    let alpha: BTreeMap<ClientId, FieldElement> = holders.iter().map(|p| (p.client_id, p.alpha)).collect();
    let liar = |c: ClientId| c != dealer_id && false_complainers.contains(&c);
    let env = |from, to, kind| Envelope {
        from,
        to,
        step: Step::ShareGradients,
        iteration: Some(dealer_id),
        kind,
    };

    let mut rows: BTreeMap<ClientId, Row> = BTreeMap::new();
    for p in holders {
        let row = dealer.row_for(field, p);
        if p.client_id != dealer_id {
            transcript.send(
                env(Party::Client(dealer_id), Party::Client(p.client_id), MessageKind::Row),
                row.coeffs(),
                &[],
            );
        }
        rows.insert(p.client_id, row);
    }

    // Pairwise cross-checks; `mismatch[j]` lists peers whose value j rejected.
    let mut mismatch: BTreeMap<ClientId, BTreeSet<ClientId>> = BTreeMap::new();
    for sender in holders {
        for receiver in holders {
            if sender.client_id == receiver.client_id {
                continue;
            }
            let value = if liar(sender.client_id) {
                field.random_vec(rng, dim)
            } else {
                rows[&sender.client_id].eval(field, receiver.alpha)
            };
            transcript.send(
                env(Party::Client(sender.client_id), Party::Client(receiver.client_id), MessageKind::CrossCheck),
                &value,
                &[],
            );
            let expected = rows[&receiver.client_id].eval(field, sender.alpha);
            if liar(receiver.client_id) || value != expected {
                mismatch.entry(receiver.client_id).or_default().insert(sender.client_id);
            }
        }
    }
    for p in holders {
        let reported: Vec<ClientId> = mismatch
            .get(&p.client_id)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        transcript.send(
            env(Party::Client(p.client_id), Party::AllClients, MessageKind::MismatchReport),
            &[],
            &reported,
        );
    }

    let mut disputed: BTreeSet<(ClientId, ClientId)> = BTreeSet::new();
    for (&j, peers) in &mismatch {
        for &k in peers {
            disputed.insert((j.min(k), j.max(k)));
        }
    }

    let mut complainers: BTreeSet<ClientId> = BTreeSet::new();
    for &(j, k) in &disputed {
        let public = dealer.base.value(field, alpha[&j], alpha[&k]);
        transcript.send(
            env(Party::Client(dealer_id), Party::AllClients, MessageKind::DisputeValue),
            &public,
            &[j, k],
        );
        for (me, other) in [(j, k), (k, j)] {
            if me != dealer_id && !liar(me) && rows[&me].eval(field, alpha[&other]) != public {
                complainers.insert(me);
            }
        }
    }
    for p in holders {
        if liar(p.client_id) {
            complainers.insert(p.client_id);
        }
    }

    let mut published: BTreeMap<ClientId, Row> = BTreeMap::new();
    loop {
        for &c in &complainers {
            if published.contains_key(&c) {
                continue;
            }
            transcript.send(
                env(Party::Client(c), Party::AllClients, MessageKind::Complaint),
                &[],
                &[dealer_id],
            );
        }
        if complainers.len() > b {
            break;
        }
        let fresh: Vec<ClientId> = complainers
            .iter()
            .copied()
            .filter(|c| !published.contains_key(c))
            .collect();
        if fresh.is_empty() {
            break;
        }
        for c in fresh {
            let row = dealer.base.row(field, alpha[&c]);
            transcript.send(
                env(Party::Client(dealer_id), Party::AllClients, MessageKind::PublishedRow),
                row.coeffs(),
                &[c],
            );
            for p in holders {
                let me = p.client_id;
                if me == dealer_id || me == c || liar(me) || complainers.contains(&me) {
                    continue;
                }
                if row.eval(field, p.alpha) != rows[&me].eval(field, alpha[&c]) {
                    complainers.insert(me);
                }
            }
            published.insert(c, row);
        }
    }

    let complainers: Vec<ClientId> = complainers.into_iter().collect();
    let shares = if verdict(dealer_id, complainers.len(), b).is_ok() {
        for (c, row) in published {
            rows.insert(c, row);
        }
        rows.into_iter().map(|(c, r)| (c, r.share())).collect()
    } else {
        BTreeMap::new()
    };
    VssOutcome {
        dealer: dealer_id,
        complainers,
        shares,
    }
}
