//! Byzantine strategies: crafted input gradients and message corruption.
//!
//! Byzantine clients are assumed to know every honest gradient. ALIE and FOE
//! pick their scale from a grid, maximizing the distance between the rule's
//! output under attack and its output on the honest gradients alone.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::party::ClientId;
use crate::protocol::CorruptionPlan;
use crate::robust::{self, squared_distance, RobustRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    /// A little is enough: `mean - tau * std` per coordinate.
    Alie,
    /// Fall of empires: `-eps * mean`.
    Foe,
    /// Sign flipping of the client's own gradient.
    SignFlip,
    /// Label flipping `y -> L - 1 - y` before computing the gradient.
    LabelFlip,
    /// Gaussian noise in place of a gradient.
    RandomNoise,
    /// Random distance and aggregate shares.
    ShareCorruption,
    /// Random sum-retrieval responses.
    ResponseCorruption,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Candidate scales for ALIE and FOE.
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    /// Standard deviation for random noise.
    #[serde(default = "default_noise")]
    pub noise_scale: f64,
}

fn default_noise() -> f64 {
    1.0
}

/// `{0.5, 1.0, ..., 10.0}`.
pub fn default_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 * 0.5).collect()
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            grid: default_grid(),
            noise_scale: 1.0,
        }
    }

    /// Message-level deviations implied by the attack.
    pub fn corruption_plan(&self, byzantine: BTreeSet<ClientId>) -> CorruptionPlan {
        let mut plan = CorruptionPlan {
            byzantine,
            ..Default::default()
        };
        match self.kind {
            AttackKind::ShareCorruption => {
                plan.distance_shares = true;
                plan.aggregate_shares = true;
            }
            AttackKind::ResponseCorruption => plan.responses = true,
            _ => {}
        }
        plan
    }

    /// Whether the attack replaces Byzantine gradients with crafted ones
    /// computed from the honest gradients.
    pub fn is_omniscient(&self) -> bool {
        matches!(self.kind, AttackKind::Alie | AttackKind::Foe)
    }
}

/// Byzantine ids: the last `b` of `1..=n`.
pub fn byzantine_ids(n: usize, b: usize) -> BTreeSet<ClientId> {
    (n - b + 1..=n).collect()
}

/// Per-coordinate mean and population standard deviation. Identical inputs
/// give an exact mean and a zero spread.
pub fn coordinate_moments(honest: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let refs: Vec<&[f64]> = honest.iter().map(Vec::as_slice).collect();
    let mean = robust::mean(&refs);
    let n = honest.len() as f64;
    let mut var = vec![0.0; mean.len()];
    for g in honest {
        for ((v, x), m) in var.iter_mut().zip(g).zip(&mean) {
            *v += (x - m).powi(2) / n;
        }
    }
    (mean, var.into_iter().map(f64::sqrt).collect())
}

/// Chosen Byzantine gradient and the scale that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CraftedGradient {
    pub gradient: Vec<f64>,
    pub scale: f64,
    pub damage: f64,
}

/// `||R(honest + b copies of candidate) - R(honest, b = 0)||`.
pub fn damage(candidate: &[f64], honest: &[Vec<f64>], b: usize, rule: &RobustRule) -> Result<f64> {
    let reference = rule.aggregate(honest, 0)?;
    let mut all = honest.to_vec();
    all.extend(std::iter::repeat_n(candidate.to_vec(), b));
    let attacked = rule.aggregate(&all, b)?;
    Ok(squared_distance(&attacked, &reference).sqrt())
}

fn grid_search(
    honest: &[Vec<f64>],
    b: usize,
    grid: &[f64],
    rule: &RobustRule,
    candidate: impl Fn(f64) -> Vec<f64>,
) -> Result<CraftedGradient> {
    let mut best: Option<CraftedGradient> = None;
    for &s in grid {
        let g = candidate(s);
        let dmg = damage(&g, honest, b, rule)?;
        if best.as_ref().is_none_or(|c| dmg > c.damage) {
            best = Some(CraftedGradient {
                gradient: g,
                scale: s,
                damage: dmg,
            });
        }
    }
    best.ok_or_else(|| Error::ConfigInvalid("attack grid is empty".into()))
}

pub fn alie(honest: &[Vec<f64>], b: usize, grid: &[f64], rule: &RobustRule) -> Result<CraftedGradient> {
    let (mu, sigma) = coordinate_moments(honest);
    grid_search(honest, b, grid, rule, |tau| {
        mu.iter().zip(&sigma).map(|(m, s)| m - tau * s).collect()
    })
}

pub fn foe(honest: &[Vec<f64>], b: usize, grid: &[f64], rule: &RobustRule) -> Result<CraftedGradient> {
    let (mu, _) = coordinate_moments(honest);
    grid_search(honest, b, grid, rule, |eps| mu.iter().map(|m| -eps * m).collect())
}

pub fn sign_flip(g: &[f64]) -> Vec<f64> {
    g.iter().map(|x| -x).collect()
}

/// Maps every label `y` to `classes - 1 - y`.
pub fn label_flip(labels: &[usize], classes: usize) -> Result<Vec<usize>> {
    if classes < 2 {
        return Err(Error::InvalidAttackTarget(format!("label flipping needs at least 2 classes, got {classes}")));
    }
    labels
        .iter()
        .map(|&y| {
            if y < classes {
                Ok(classes - 1 - y)
            } else {
                Err(Error::InvalidAttackTarget(format!("label {y} outside 0..{classes}")))
            }
        })
        .collect()
}

pub fn random_noise<R: Rng + ?Sized>(d: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robust::Selection;

    fn honest() -> Vec<Vec<f64>> {
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 1.0], vec![1.0, 2.0], vec![1.5, 0.5]]
    }

    #[test]
    fn alie_inert_without_spread() {
        let h = vec![vec![0.3, -0.2]; 6];
        let rule = RobustRule::new(Selection::Krum, false);
        let (mu, sigma) = coordinate_moments(&h);
        assert_eq!(sigma, vec![0.0; 2]);
        let out = alie(&h, 2, &default_grid(), &rule).unwrap();
        assert_eq!(out.gradient, mu);
        let zero = alie(&honest(), 2, &[0.0], &rule).unwrap();
        assert_eq!(zero.gradient, coordinate_moments(&honest()).0);
    }

    #[test]
    fn foe_scales() {
        let rule = RobustRule::new(Selection::Krum, true);
        let mu = coordinate_moments(&honest()).0;
        assert_eq!(foe(&honest(), 2, &[0.0], &rule).unwrap().gradient, vec![-0.0; 2]);
        assert_eq!(foe(&honest(), 2, &[1.0], &rule).unwrap().gradient, sign_flip(&mu));
    }

    #[test]
    fn grid_has_twenty_points() {
        let g = default_grid();
        assert_eq!(g.len(), 20);
        assert_eq!((g[0], g[19]), (0.5, 10.0));
    }

    #[test]
    fn flips() {
        let g = vec![1.5, -2.0, 0.0];
        assert_eq!(sign_flip(&sign_flip(&g)), g);
        assert_eq!(label_flip(&[0, 1], 2).unwrap(), vec![1, 0]);
        assert_eq!(label_flip(&[3], 10).unwrap(), vec![6]);
        let ys = vec![0, 4, 9, 2];
        assert_eq!(label_flip(&label_flip(&ys, 10).unwrap(), 10).unwrap(), ys);
        assert!(matches!(label_flip(&[1], 1), Err(Error::InvalidAttackTarget(_))));
        assert!(matches!(label_flip(&[10], 10), Err(Error::InvalidAttackTarget(_))));
    }

    #[test]
    fn corruption_plans() {
        let byz = byzantine_ids(7, 2);
        assert_eq!(byz, BTreeSet::from([6, 7]));
        let p = AttackSpec::new(AttackKind::ShareCorruption).corruption_plan(byz.clone());
        assert!(p.distance_shares && p.aggregate_shares && !p.responses);
        let p = AttackSpec::new(AttackKind::ResponseCorruption).corruption_plan(byz.clone());
        assert!(p.responses && !p.distance_shares);
        assert_eq!(AttackSpec::new(AttackKind::Alie).corruption_plan(byz.clone()), CorruptionPlan { byzantine: byz, ..Default::default() });
    }
}
