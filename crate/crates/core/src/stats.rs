//! Small statistics helpers for the audit tests.

use std::collections::BTreeMap;
use std::hash::Hash;

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Result of a chi-squared test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquaredTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquaredTest {
    fn from_statistic(statistic: f64, dof: usize) -> Self {
        let p_value = if dof == 0 {
            1.0
        } else {
            let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
            1.0 - dist.cdf(statistic)
        };
        Self {
            statistic,
            dof,
            p_value,
        }
    }

    /// True when the null hypothesis survives at level `alpha`.
    pub fn accepts(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Two-sample homogeneity test on categorical samples: are `a` and `b`
/// drawn from the same distribution? Categories absent from both samples are
/// ignored.
pub fn chi_squared_two_sample<K: Ord + Hash + Clone>(a: &[K], b: &[K]) -> ChiSquaredTest {
    let mut table: BTreeMap<K, (f64, f64)> = BTreeMap::new();
    for k in a {
        table.entry(k.clone()).or_default().0 += 1.0;
    }
    for k in b {
        table.entry(k.clone()).or_default().1 += 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    let statistic = table
        .values()
        .map(|&(ca, cb)| {
            let col = ca + cb;
            let ea = col * na / total;
            let eb = col * nb / total;
            (ca - ea).powi(2) / ea + (cb - eb).powi(2) / eb
        })
        .sum();
    ChiSquaredTest::from_statistic(statistic, table.len().saturating_sub(1))
}

/// Goodness of fit of counts over `categories` equally likely outcomes.
pub fn chi_squared_uniform(samples: &[u64], categories: u64) -> ChiSquaredTest {
    let mut counts = vec![0f64; categories as usize];
    for &s in samples {
        counts[s as usize] += 1.0;
    }
    let expected = samples.len() as f64 / categories as f64;
    let statistic = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    ChiSquaredTest::from_statistic(statistic, categories as usize - 1)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divides by `n - 1`).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
