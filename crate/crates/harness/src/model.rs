//! Multinomial logistic regression with softmax cross-entropy.
//!
//! Weights are stored class-major: class `c` owns
//! `w[c (f + 1) .. (c + 1)(f + 1)]`, the last entry being its bias.

use crate::data::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogReg {
    pub classes: usize,
    pub features: usize,
}

impl LogReg {
    pub fn for_dataset(data: &Dataset) -> Self {
        Self {
            classes: data.classes,
            features: data.n_features,
        }
    }

    pub fn dim(&self) -> usize {
        self.classes * (self.features + 1)
    }

    fn stride(&self) -> usize {
        self.features + 1
    }

    /// Class probabilities for one sample, written into `out`.
    fn probabilities(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let s = self.stride();
        for (c, o) in out.iter_mut().enumerate() {
            let wc = &w[c * s..(c + 1) * s];
            *o = wc[self.features] + wc[..self.features].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        out.iter_mut().for_each(|o| *o /= total);
    }

    /// Mean cross-entropy over the samples `idx` with the given labels.
    pub fn loss(&self, w: &[f64], data: &Dataset, labels: &[usize], idx: &[usize]) -> f64 {
        let mut p = vec![0.0; self.classes];
        let mut total = 0.0;
        for &i in idx {
            self.probabilities(w, data.row(i), &mut p);
            total -= p[labels[i]].max(f64::MIN_POSITIVE).ln();
        }
        total / idx.len().max(1) as f64
    }

    /// Gradient of [`loss`](Self::loss): `mean_i (p_i - e_{y_i}) [x_i; 1]^T`.
    pub fn gradient(&self, w: &[f64], data: &Dataset, labels: &[usize], idx: &[usize]) -> Vec<f64> {
        let s = self.stride();
        let mut g = vec![0.0; self.dim()];
        let mut p = vec![0.0; self.classes];
        for &i in idx {
            let x = data.row(i);
            self.probabilities(w, x, &mut p);
            p[labels[i]] -= 1.0;
            for (c, &r) in p.iter().enumerate() {
                let gc = &mut g[c * s..(c + 1) * s];
                for (gk, xk) in gc.iter_mut().zip(x) {
                    *gk += r * xk;
                }
                gc[self.features] += r;
            }
        }
        let m = idx.len().max(1) as f64;
        g.iter_mut().for_each(|v| *v /= m);
        g
    }

    pub fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        let mut p = vec![0.0; self.classes];
        self.probabilities(w, x, &mut p);
        p.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
            .0
    }

    pub fn accuracy(&self, w: &[f64], data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = (0..data.len()).filter(|&i| self.predict(w, data.row(i)) == data.labels[i]).count();
        hits as f64 / data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn toy() -> Dataset {
        let feats = vec![1.0, 0.0, 2.0, 1.0, -1.0, 0.5, 0.0, -2.0];
        Dataset::new(feats, vec![0, 0, 1, 1], 2, 2).unwrap()
    }

    #[test]
    fn zero_weights_balanced_two_class() {
        // p = 1/2 everywhere, so the gradient of class c is
        // (mean of all x - mean of class c x) / 2.
        let d = toy();
        let m = LogReg::for_dataset(&d);
        let idx: Vec<usize> = (0..4).collect();
        let g = m.gradient(&vec![0.0; m.dim()], &d, &d.labels, &idx);
        let mean_all = [(1.0 + 2.0 - 1.0 + 0.0) / 4.0, (0.0 + 1.0 + 0.5 - 2.0) / 4.0];
        let mean0 = [1.5, 0.5];
        let mean1 = [-0.5, -0.75];
        for k in 0..2 {
            assert!((g[k] - 0.5 * (mean_all[k] - mean0[k])).abs() < 1e-12);
            assert!((g[3 + k] - 0.5 * (mean_all[k] - mean1[k])).abs() < 1e-12);
        }
        assert!(g[2].abs() < 1e-12 && g[5].abs() < 1e-12);
        assert!((m.loss(&vec![0.0; m.dim()], &d, &d.labels, &idx) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let feats: Vec<f64> = (0..40 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let d = Dataset::new(feats, labels, 3, 4).unwrap();
        let m = LogReg::for_dataset(&d);
        let idx: Vec<usize> = (0..40).collect();
        let w: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = m.gradient(&w, &d, &d.labels, &idx);
        let h = 1e-5;
        for k in 0..m.dim() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[k] += h;
            wm[k] -= h;
            let fd = (m.loss(&wp, &d, &d.labels, &idx) - m.loss(&wm, &d, &d.labels, &idx)) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1e-3), "coordinate {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn separable_toy_converges() {
        let d = toy();
        let m = LogReg::for_dataset(&d);
        let idx: Vec<usize> = (0..4).collect();
        let mut w = vec![0.0; m.dim()];
        for _ in 0..20_000 {
            let g = m.gradient(&w, &d, &d.labels, &idx);
            w.iter_mut().zip(&g).for_each(|(a, b)| *a -= 1.0 * b);
        }
        let g = m.gradient(&w, &d, &d.labels, &idx);
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-3);
        assert_eq!(m.accuracy(&w, &d), 1.0);
    }
}
