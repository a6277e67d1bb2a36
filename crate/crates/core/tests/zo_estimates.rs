use byzagg_core::sharing::randomness::SharedRandomness;
use byzagg_core::zo::{directional_coefficient, sample_perturbations, zo_estimate, ZoConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[test]
fn linear_loss_is_exact_per_perturbation() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let d = 30;
    let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let zs = sample_perturbations(d, 5, &SharedRandomness::from_u64(2), 0);
    for mu in [1e-4, 1e-2, 1.0] {
        let cfg = ZoConfig { r: 1, zo_mu: mu, average: false };
        for z in &zs {
            let est = zo_estimate(|x: &[f64]| dot(&a, x), &w, std::slice::from_ref(z), &cfg).unwrap();
            let proj = dot(&a, z) * d as f64;
            for (e, zi) in est.iter().zip(z) {
                assert!((e - proj * zi).abs() <= 1e-9 * (1.0 + proj.abs()), "mu={mu}");
            }
        }
    }
}

#[test]
fn summing_is_r_times_averaging() {
    let zs = sample_perturbations(4, 8, &SharedRandomness::from_u64(3), 1);
    let loss = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let w = [0.5, -1.0, 2.0, 0.0];
    let sum = zo_estimate(loss, &w, &zs, &ZoConfig { r: 8, zo_mu: 1e-3, average: false }).unwrap();
    let avg = zo_estimate(loss, &w, &zs, &ZoConfig { r: 8, zo_mu: 1e-3, average: true }).unwrap();
    for (s, a) in sum.iter().zip(&avg) {
        assert!((s - 8.0 * a).abs() < 1e-9);
    }
}

struct Quadratic {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Quadratic {
    /// Random symmetric positive definite `A = M^T M / d + I`.
    fn random(d: usize, rng: &mut ChaCha20Rng) -> Self {
        let m: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let a = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| (0..d).map(|k| m[k][i] * m[k][j]).sum::<f64>() / d as f64 + if i == j { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        Self { a, b: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect() }
    }

    fn loss(&self, w: &[f64]) -> f64 {
        let aw: Vec<f64> = self.a.iter().map(|r| dot(r, w)).collect();
        0.5 * dot(w, &aw) + dot(&self.b, w)
    }

    fn grad(&self, w: &[f64]) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(r, bi)| dot(r, w) + bi).collect()
    }
}

#[test]
fn quadratic_expectation() {
    let (d, r, trials) = (20, 512, 100);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let q = Quadratic::random(d, &mut rng);
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = q.grad(&w);
    let cfg = ZoConfig { r, zo_mu: 1e-3, average: true };
    let mut mean = vec![0.0; d];
    for t in 0..trials {
        let zs = sample_perturbations(d, r, &SharedRandomness::from_u64(100 + t), 0);
        let est = zo_estimate(|x: &[f64]| q.loss(x), &w, &zs, &cfg).unwrap();
        for (m, e) in mean.iter_mut().zip(est) {
            *m += e / trials as f64;
        }
    }
    let err: Vec<f64> = mean.iter().zip(&g).map(|(m, x)| m - x).collect();
    assert!(norm(&err) / norm(&g) < 0.1, "relative error {}", norm(&err) / norm(&g));
}

#[test]
fn quadratic_cosine_margin() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for d in [5, 20, 50] {
        let q = Quadratic::random(d, &mut rng);
        for t in 0..100 {
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = q.grad(&w);
            let zs = sample_perturbations(d, 256, &SharedRandomness::from_u64(t), d as u64);
            let est = zo_estimate(|x: &[f64]| q.loss(x), &w, &zs, &ZoConfig { r: 256, zo_mu: 1e-3, average: true }).unwrap();
            let cos = dot(&est, &g) / (norm(&est) * norm(&g));
            assert!(cos > 0.5, "d={d} trial={t} cos={cos}");
        }
    }
}

#[test]
fn perturbations_identical_across_clients() {
    let sr = SharedRandomness::from_u64(9);
    let a = sample_perturbations(10, 4, &sr, 2);
    let b = sample_perturbations(10, 4, &sr.clone(), 2);
    assert_eq!(a.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>());
    let mut loss = |x: &[f64]| x[0];
    assert!((directional_coefficient(&mut loss, &[0.0; 10], &a[0], 1e-3).unwrap() - 10.0 * a[0][0]).abs() < 1e-9);
}
