//! Two-point zero-order gradient estimates along shared random directions.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sharing::randomness::{Purpose, SharedRandomness};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoConfig {
    /// Perturbations per round.
    pub r: usize,
    /// Smoothing radius.
    pub zo_mu: f64,
    /// Divide the sum over perturbations by `r`.
    #[serde(default)]
    pub average: bool,
}

impl Default for ZoConfig {
    fn default() -> Self {
        Self {
            r: 64,
            zo_mu: 1e-3,
            average: false,
        }
    }
}

impl ZoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::ConfigInvalid("need at least one perturbation".into()));
        }
        if !(self.zo_mu.is_finite() && self.zo_mu > 0.0) {
            return Err(Error::ConfigInvalid(format!("smoothing radius must be positive, got {}", self.zo_mu)));
        }
        Ok(())
    }
}

/// `r` directions uniform on the unit sphere in `R^d`, identical for every
/// client in the same round.
pub fn sample_perturbations(d: usize, r: usize, sr: &SharedRandomness, round: u64) -> Vec<Vec<f64>> {
    let mut rng = sr.stream(Purpose::ZoPerturbation { round });
    (0..r)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// `d (F(w + mu z) - F(w - mu z)) / (2 mu)`, the coefficient of `z` in a
/// single-direction estimate.
pub fn directional_coefficient<F: FnMut(&[f64]) -> f64>(loss: &mut F, w: &[f64], z: &[f64], zo_mu: f64) -> Result<f64> {
    let plus: Vec<f64> = w.iter().zip(z).map(|(a, b)| a + zo_mu * b).collect();
    let minus: Vec<f64> = w.iter().zip(z).map(|(a, b)| a - zo_mu * b).collect();
    let (fp, fm) = (loss(&plus), loss(&minus));
    if !(fp.is_finite() && fm.is_finite()) {
        return Err(Error::InvalidLoss);
    }
    Ok(w.len() as f64 * (fp - fm) / (2.0 * zo_mu))
}

/// `sum_r d (F(w + mu z_r) - F(w - mu z_r)) / (2 mu) z_r`, divided by `R`
/// when averaging.
pub fn zo_estimate<F: FnMut(&[f64]) -> f64>(
    mut loss: F,
    w: &[f64],
    perturbations: &[Vec<f64>],
    cfg: &ZoConfig,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; w.len()];
    for z in perturbations {
        let c = directional_coefficient(&mut loss, w, z, cfg.zo_mu)?;
        for (a, zi) in acc.iter_mut().zip(z) {
            *a += c * zi;
        }
    }
    if cfg.average {
        let r = perturbations.len() as f64;
        acc.iter_mut().for_each(|a| *a /= r);
    }
    Ok(acc)
}

/// Scalars a client would need to send instead of the full gradient.
pub fn compression_ratio(d: usize, r: usize) -> f64 {
    d as f64 / r as f64
}
