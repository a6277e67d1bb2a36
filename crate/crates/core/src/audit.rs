//! Statistical privacy audits over simulated rounds.
//!
//! A party's view of a round is the flattened list of field elements it
//! received. Two input assignments are compared by collecting views over many
//! independently seeded rounds and running two-sample chi-squared tests on a
//! set of projections: every view coordinate, plus random linear combinations
//! of all coordinates. A Bonferroni correction spreads the significance level
//! over the projections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};
use crate::party::{ClientId, Party};
use crate::poly::Polynomial;
use crate::protocol::{run_round_small_field, CorruptionPlan, MessageKind, ProtocolConfig, RoundContext, Step};
use crate::robust::NeighborSets;
use crate::sharing::randomness::SharedRandomness;
use crate::stats::{chi_squared_two_sample, chi_squared_uniform};

/// Whose messages make up a view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Observer {
    /// Everything received by a set of colluding clients.
    Coalition(Vec<ClientId>),
    /// What the federator receives during the given steps.
    Federator(Vec<Step>),
}

impl Observer {
    fn view(&self, result: &crate::protocol::RoundResult) -> Vec<u64> {
        let t = &result.transcript;
        let mut out = Vec::new();
        match self {
            Observer::Coalition(ids) => {
                for m in t.messages() {
                    let seen = match m.to {
                        Party::Client(c) => ids.contains(&c),
                        Party::AllClients => true,
                        Party::Federator => false,
                    };
                    if seen {
                        if let Some(body) = &m.body {
                            out.extend(body.elements.iter().map(|e| e.value()));
                            out.extend(body.ids.iter().map(|&id| id as u64));
                        }
                    }
                }
            }
            Observer::Federator(steps) => {
                for m in t.messages() {
                    if m.to == Party::Federator && steps.contains(&m.step) {
                        if let Some(body) = &m.body {
                            out.extend(body.elements.iter().map(|e| e.value()));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Runs `trials` rounds on `inputs`, seeding round `t` with `seed + t`, and
/// returns the observer's view of each.
pub fn collect_views(
    cfg: &ProtocolConfig,
    inputs: &[Vec<i64>],
    observer: &Observer,
    trials: usize,
    seed: u64,
) -> Result<Vec<Vec<u64>>> {
    let mut cfg = *cfg;
    cfg.record_payloads = true;
    let field = cfg.quant.field;
    let embedded: Vec<Vec<FieldElement>> = inputs.iter().map(|g| field.embed_vec(g)).collect::<Result<_>>()?;
    let plan = CorruptionPlan::honest();
    let mut views = Vec::with_capacity(trials);
    for t in 0..trials as u64 {
        let shared = SharedRandomness::from_u64(seed.wrapping_add(t));
        let ctx = RoundContext {
            round: 0,
            seed: seed.wrapping_add(t),
            shared: &shared,
            plan: &plan,
        };
        let res = run_round_small_field(&cfg, &embedded, &ctx)?;
        views.push(observer.view(&res));
    }
    if views.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(Error::ConfigInvalid("view length varies between trials".into()));
    }
    Ok(views)
}

/// Neighbour sets of a single round on `inputs`.
pub fn neighbor_sets_of(cfg: &ProtocolConfig, inputs: &[Vec<i64>], seed: u64) -> Result<Option<NeighborSets>> {
    let field = cfg.quant.field;
    let embedded: Vec<Vec<FieldElement>> = inputs.iter().map(|g| field.embed_vec(g)).collect::<Result<_>>()?;
    let shared = SharedRandomness::from_u64(seed);
    let plan = CorruptionPlan::honest();
    let ctx = RoundContext {
        round: 0,
        seed,
        shared: &shared,
        plan: &plan,
    };
    Ok(run_round_small_field(cfg, &embedded, &ctx)?.neighbor_sets)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndistinguishabilityReport {
    pub trials: usize,
    pub view_len: usize,
    pub projections: usize,
    pub min_p_value: f64,
    /// Projections whose p-value fell below `alpha / projections`.
    pub rejections: usize,
    pub alpha: f64,
}

impl IndistinguishabilityReport {
    pub fn passes(&self) -> bool {
        self.rejections == 0
    }
}

/// Compares two samples of views coordinate-wise and along `random_projections`
/// random linear forms over `F_q`.
pub fn compare_views(
    field: &PrimeField,
    a: &[Vec<u64>],
    b: &[Vec<u64>],
    random_projections: usize,
    alpha: f64,
    seed: u64,
) -> Result<IndistinguishabilityReport> {
    let len = a.first().map_or(0, Vec::len);
    if a.iter().chain(b).any(|v| v.len() != len) {
        return Err(Error::DimensionMismatch {
            expected: len,
            got: b.first().map_or(0, Vec::len),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let forms: Vec<Vec<u64>> = (0..random_projections)
        .map(|_| (0..len).map(|_| rng.random_range(0..field.modulus())).collect())
        .collect();
    let project = |views: &[Vec<u64>], form: &[u64]| -> Vec<u64> {
        views
            .iter()
            .map(|v| {
                v.iter().zip(form).fold(FieldElement::ZERO, |acc, (&x, &c)| {
                    field.add(acc, field.mul(field.elem(x), field.elem(c)))
                })
            })
            .map(FieldElement::value)
            .collect()
    };

    let mut p_values = Vec::with_capacity(len + random_projections);
    for u in 0..len {
        let ca: Vec<u64> = a.iter().map(|v| v[u]).collect();
        let cb: Vec<u64> = b.iter().map(|v| v[u]).collect();
        p_values.push(chi_squared_two_sample(&ca, &cb).p_value);
    }
    for form in &forms {
        p_values.push(chi_squared_two_sample(&project(a, form), &project(b, form)).p_value);
    }
    let m = p_values.len().max(1) as f64;
    Ok(IndistinguishabilityReport {
        trials: a.len().min(b.len()),
        view_len: len,
        projections: p_values.len(),
        min_p_value: p_values.iter().copied().fold(1.0, f64::min),
        rejections: p_values.iter().filter(|&&p| p < alpha / m).count(),
        alpha,
    })
}

/// Uniformity of the coefficient of `x^k` (for each `1 <= k <= 2z`) of the
/// polynomial the federator interpolates from the distance shares of the
/// first client pair. Returns one p-value per coefficient.
pub fn distance_share_coefficients(cfg: &ProtocolConfig, inputs: &[Vec<i64>], trials: usize, seed: u64) -> Result<Vec<f64>> {
    let field = cfg.quant.field;
    let mut cfg = *cfg;
    cfg.record_payloads = true;
    let embedded: Vec<Vec<FieldElement>> = inputs.iter().map(|g| field.embed_vec(g)).collect::<Result<_>>()?;
    let plan = CorruptionPlan::honest();
    let degree = 2 * cfg.z;
    let mut coeffs: Vec<Vec<u64>> = vec![Vec::with_capacity(trials); degree];
    for t in 0..trials as u64 {
        let shared = SharedRandomness::from_u64(seed.wrapping_add(t));
        let ctx = RoundContext {
            round: 0,
            seed: seed.wrapping_add(t),
            shared: &shared,
            plan: &plan,
        };
        let res = run_round_small_field(&cfg, &embedded, &ctx)?;
        let points: Vec<(FieldElement, FieldElement)> = res
            .transcript
            .messages()
            .iter()
            .filter(|m| m.kind == MessageKind::DistanceShare)
            .filter_map(|m| match (m.from, &m.body) {
                (Party::Client(c), Some(body)) => Some((field.elem(c as u64), body.elements[0])),
                _ => None,
            })
            .collect();
        let poly = Polynomial::interpolate(&field, &points)?;
        for (k, bucket) in coeffs.iter_mut().enumerate() {
            bucket.push(poly.coeff(k + 1).value());
        }
    }
    Ok(coeffs
        .iter()
        .map(|c| chi_squared_uniform(c, field.modulus()).p_value)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::QuantConfig;
    use crate::robust::{RobustRule, Selection};

    fn small() -> ProtocolConfig {
        let quant = QuantConfig::new(4, 1.0, PrimeField::new(31).unwrap()).unwrap();
        ProtocolConfig::new(7, 1, 2, 1, RobustRule::new(Selection::Krum, true), quant)
    }

    #[test]
    fn views_have_fixed_length() {
        let xs: Vec<Vec<i64>> = (0..7).map(|i| vec![i - 3]).collect();
        let v = collect_views(&small(), &xs, &Observer::Coalition(vec![1, 2]), 5, 1).unwrap();
        assert_eq!(v.len(), 5);
        assert!(!v[0].is_empty());
        let f = collect_views(&small(), &xs, &Observer::Federator(vec![Step::SumRetrieval]), 3, 1).unwrap();
        // One response per client and query.
        assert_eq!(f[0].len(), 49);
    }

    #[test]
    fn detects_a_shift() {
        let field = PrimeField::new(31).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let a: Vec<Vec<u64>> = (0..3000).map(|_| vec![rng.random_range(0..31), 4]).collect();
        let b: Vec<Vec<u64>> = (0..3000).map(|_| vec![rng.random_range(0..16), 4]).collect();
        let r = compare_views(&field, &a, &b, 4, 0.01, 1).unwrap();
        assert!(!r.passes());
        let r = compare_views(&field, &a, &a, 4, 0.01, 1).unwrap();
        assert!(r.passes());
        assert_eq!(r.projections, 6);
    }
}
