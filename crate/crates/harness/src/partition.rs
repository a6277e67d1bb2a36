//! Label-wise Dirichlet partitioning of a dataset over clients.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{HarnessError, Result};

/// Proportions drawn from `Dirichlet(beta 1_n)` as normalized
/// `Gamma(beta, 1)` draws. Draws that all underflow to zero fall back to a
/// single uniformly chosen client.
pub fn dirichlet<R: Rng + ?Sized>(n: usize, beta: f64, rng: &mut R) -> Result<Vec<f64>> {
    let gamma = Gamma::new(beta, 1.0).map_err(|e| HarnessError::Config(format!("dirichlet beta {beta}: {e}")))?;
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        return Ok(draws.into_iter().map(|g| g / total).collect());
    }
    let mut p = vec![0.0; n];
    p[rng.random_range(0..n)] = 1.0;
    Ok(p)
}

/// Splits sample indices over `n` clients: the samples of each class are
/// shuffled and cut according to fresh Dirichlet proportions. Clients left
/// empty receive one sample from the currently largest client.
pub fn dirichlet_partition<R: Rng + ?Sized>(
    labels: &[usize],
    classes: usize,
    n: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if n == 0 || labels.len() < n {
        return Err(HarnessError::Config(format!("cannot split {} samples over {n} clients", labels.len())));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(HarnessError::Config(format!("dirichlet beta must be positive, got {beta}")));
    }
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); n];
    for class in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(rng);
        let p = dirichlet(n, beta, rng)?;
        let mut start = 0;
        let mut cum = 0.0;
        for (client, share) in p.iter().enumerate() {
            cum += share;
            let end = if client + 1 == n {
                idx.len()
            } else {
                ((cum * idx.len() as f64).round() as usize).clamp(start, idx.len())
            };
            parts[client].extend_from_slice(&idx[start..end]);
            start = end;
        }
    }
    while let Some(empty) = parts.iter().position(Vec::is_empty) {
        let donor = (0..n).max_by_key(|&c| (parts[c].len(), std::cmp::Reverse(c))).expect("n > 0");
        let moved = parts[donor].pop().expect("the largest client is not empty");
        parts[empty].push(moved);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// Shannon entropy (nats) of a client's label histogram.
pub fn label_entropy(labels: &[usize], part: &[usize], classes: usize) -> f64 {
    let mut counts = vec![0usize; classes];
    for &i in part {
        counts[labels[i]] += 1;
    }
    let total = part.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn labels(per_class: usize, classes: usize) -> Vec<usize> {
        (0..per_class * classes).map(|i| i % classes).collect()
    }

    #[test]
    fn is_a_set_partition() {
        let ys = labels(50, 10);
        for beta in [0.05, 0.5, 100.0] {
            let parts = dirichlet_partition(&ys, 10, 15, beta, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
            let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..ys.len()).collect::<Vec<_>>());
            assert!(parts.iter().all(|p| !p.is_empty()));
        }
    }

    #[test]
    fn empty_clients_are_filled() {
        // Twelve samples over ten clients at tiny beta leaves most clients
        // empty before the guard.
        let ys = labels(6, 2);
        let parts = dirichlet_partition(&ys, 2, 10, 0.01, &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        assert!(parts.iter().all(|p| !p.is_empty()));
        assert_eq!(parts.iter().map(Vec::len).sum::<usize>(), 12);
    }

    #[test]
    fn proportions_sum_to_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for beta in [1e-3, 0.1, 10.0] {
            let p = dirichlet(7, beta, &mut rng).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(dirichlet(3, 0.0, &mut rng).is_err());
    }
}
