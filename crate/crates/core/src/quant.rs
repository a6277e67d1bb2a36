//! Unbiased stochastic quantization of real gradients into `F_q`.
//!
//! Entries are clipped to `[-c, c]` and rounded at random to one of the two
//! neighbouring points of a `levels`-point grid with step
//! `delta = 2c / (levels - 1)`, so that the expectation of the de-quantized
//! value equals the clipped input. Grid points are stored as signed integer
//! indices embedded into the field. With an odd number of levels index `k`
//! stands for `k * delta`; with an even number it stands for
//! `(k + 1/2) * delta`, which keeps both endpoints on the grid.
//!
//! Clipping biases entries whose magnitude exceeds `c`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub levels: u32,
    pub clip: f64,
    pub field: PrimeField,
}

/// Output of [`quantize`]: one embedded grid index per coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedGradient {
    pub values: Vec<FieldElement>,
}

impl QuantizedGradient {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn indices(&self, field: &PrimeField) -> Vec<i64> {
        field.unembed_vec(&self.values)
    }
}

impl QuantConfig {
    pub fn new(levels: u32, clip: f64, field: PrimeField) -> Result<Self> {
        let cfg = Self { levels, clip, field };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::ConfigInvalid(format!("need at least 2 levels, got {}", self.levels)));
        }
        if !(self.clip.is_finite() && self.clip > 0.0) {
            return Err(Error::ConfigInvalid(format!("clip range must be positive, got {}", self.clip)));
        }
        if self.max_index() as u64 > self.field.signed_bound() {
            return Err(Error::FieldTooSmall {
                required: 2 * self.max_index() as u128 + 1,
            });
        }
        Ok(())
    }

    /// Grid step.
    pub fn step(&self) -> f64 {
        2.0 * self.clip / (self.levels - 1) as f64
    }

    fn offset(&self) -> f64 {
        if self.levels % 2 == 1 {
            0.0
        } else {
            0.5
        }
    }

    /// Smallest grid index.
    pub fn min_index(&self) -> i64 {
        -(self.levels as i64 / 2)
    }

    /// Largest index magnitude a single quantized entry can take.
    pub fn max_index(&self) -> i64 {
        self.levels as i64 / 2
    }

    /// Real value of grid index `k`.
    pub fn grid_value(&self, k: i64) -> f64 {
        (k as f64 + self.offset()) * self.step()
    }

    /// Quantizes one entry to a grid index.
    pub fn quantize_entry<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> i64 {
        let clipped = x.clamp(-self.clip, self.clip);
        let pos = clipped / self.step() - self.offset();
        let lower = pos.floor();
        let frac = pos - lower;
        let mut k = lower as i64;
        if frac > 0.0 && rng.random::<f64>() < frac {
            k += 1;
        }
        k.clamp(self.min_index(), self.min_index() + self.levels as i64 - 1)
    }
}

/// Minimal admissible modulus, `2 d (n - b)^2 levels^2`.
pub fn required_modulus(levels: u32, n: usize, b: usize, d: usize) -> u128 {
    let honest = n.saturating_sub(b) as u128;
    let mu = levels as u128;
    2 * d as u128 * honest * honest * mu * mu
}

/// Checks that aggregating `n - b` quantized `d`-vectors and taking squared
/// distances of the results cannot wrap around the field.
pub fn validate_field_size(cfg: &QuantConfig, n: usize, b: usize, d: usize) -> Result<()> {
    let required = required_modulus(cfg.levels, n, b, d);
    if (cfg.field.modulus() as u128) < required {
        return Err(Error::FieldTooSmall { required });
    }
    Ok(())
}

pub fn quantize<R: Rng + ?Sized>(g: &[f64], cfg: &QuantConfig, rng: &mut R) -> Result<QuantizedGradient> {
    if let Some(index) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidGradient { index });
    }
    let values = g
        .iter()
        .map(|&x| cfg.field.embed_signed(cfg.quantize_entry(x, rng)))
        .collect::<Result<_>>()?;
    Ok(QuantizedGradient { values })
}

pub fn dequantize(qg: &QuantizedGradient, cfg: &QuantConfig) -> Result<Vec<f64>> {
    dequantize_sum(&qg.values, 1, cfg)
}

/// De-quantizes the field sum of `summands` quantized vectors, returning the
/// real-valued sum. Magnitudes beyond `summands * levels / 2` can only come
/// from wrap-around and are rejected.
pub fn dequantize_sum(values: &[FieldElement], summands: u64, cfg: &QuantConfig) -> Result<Vec<f64>> {
    let bound = summands as i64 * cfg.max_index();
    let shift = summands as f64 * cfg.offset();
    values
        .iter()
        .map(|&v| {
            let k = cfg.field.unembed_signed(v);
            if k.abs() > bound {
                return Err(Error::OverflowSuspected { value: k, bound });
            }
            Ok((k as f64 + shift) * cfg.step())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn cfg(levels: u32, clip: f64) -> QuantConfig {
        QuantConfig::new(levels, clip, PrimeField::mersenne61()).unwrap()
    }

    #[test]
    fn grid_points_are_fixed_points() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for c in [cfg(9, 1.0), cfg(8, 1.0), cfg(1024, 1.0)] {
            for k in [c.min_index(), -1, 0, 1, c.min_index() + c.levels as i64 - 1] {
                let x = c.grid_value(k);
                for _ in 0..20 {
                    assert_eq!(c.quantize_entry(x, &mut rng), k);
                }
            }
        }
    }

    #[test]
    fn grid_has_symmetric_endpoints() {
        for c in [cfg(9, 1.0), cfg(8, 2.0), cfg(1024, 1.0)] {
            let lo = c.grid_value(c.min_index());
            let hi = c.grid_value(c.min_index() + c.levels as i64 - 1);
            assert!((lo + c.clip).abs() < 1e-12);
            assert!((hi - c.clip).abs() < 1e-12);
        }
    }

    #[test]
    fn clipping_is_deterministic() {
        let c = cfg(9, 1.0);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let q = quantize(&[5.0, -7.5], &c, &mut rng).unwrap();
        assert_eq!(dequantize(&q, &c).unwrap(), vec![1.0, -1.0]);
    }

    #[test]
    fn rounding_stays_adjacent() {
        let c = cfg(9, 1.0);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let g: Vec<f64> = (0..200).map(|i| -1.0 + i as f64 * 0.01).collect();
        let back = dequantize(&quantize(&g, &c, &mut rng).unwrap(), &c).unwrap();
        for (x, y) in g.iter().zip(&back) {
            assert!((x - y).abs() <= c.step() + 1e-12);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let c = cfg(9, 1.0);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        assert_eq!(
            quantize(&[0.0, f64::NAN], &c, &mut rng),
            Err(Error::InvalidGradient { index: 1 })
        );
        assert!(quantize(&[f64::INFINITY], &c, &mut rng).is_err());
    }

    #[test]
    fn zero_sum_dequantizes_to_zero() {
        let c = cfg(9, 1.0);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let a = quantize(&[0.0; 4], &c, &mut rng).unwrap();
        let sum = c.field.add_vec(&a.values, &a.values);
        assert_eq!(dequantize_sum(&sum, 2, &c).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn even_level_sums_keep_the_offset() {
        let c = cfg(8, 1.0);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let xs = [c.grid_value(-4), c.grid_value(3), c.grid_value(0)];
        let qs: Vec<_> = xs.iter().map(|&x| quantize(&[x], &c, &mut rng).unwrap()).collect();
        let mut acc = vec![FieldElement::ZERO];
        for q in &qs {
            c.field.add_assign_vec(&mut acc, &q.values);
        }
        let total = dequantize_sum(&acc, 3, &c).unwrap()[0];
        assert!((total - xs.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn overflow_is_flagged() {
        let c = cfg(9, 1.0);
        let big = c.field.embed_signed(5).unwrap();
        assert!(matches!(
            dequantize_sum(&[big], 1, &c),
            Err(Error::OverflowSuspected { value: 5, bound: 4 })
        ));
    }

    #[test]
    fn field_size_validation() {
        // 2 * 7840 * 30^2 * 1024^2
        assert_eq!(required_modulus(1024, 40, 10, 7840), 14_797_504_512_000);
        let c = cfg(1024, 1.0);
        assert!(validate_field_size(&c, 40, 10, 7840).is_ok());
        let small = QuantConfig {
            levels: 1024,
            clip: 1.0,
            field: PrimeField::new(101).unwrap(),
        };
        assert_eq!(
            validate_field_size(&small, 40, 10, 7840),
            Err(Error::FieldTooSmall { required: 14_797_504_512_000 })
        );
    }

    #[test]
    fn field_size_boundary() {
        let required = required_modulus(4, 5, 1, 3);
        let field = PrimeField::for_bound(required).unwrap();
        let c = QuantConfig::new(4, 1.0, field).unwrap();
        assert!(validate_field_size(&c, 5, 1, 3).is_ok());
        let q = crate::field::next_prime(required).unwrap();
        let exact = QuantConfig::new(4, 1.0, PrimeField::new(q).unwrap()).unwrap();
        assert!(validate_field_size(&exact, 5, 1, 3).is_ok());
    }

    #[test]
    fn seeded_quantization_is_reproducible() {
        let c = cfg(1024, 1.0);
        let g: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = quantize(&g, &c, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let b = quantize(&g, &c, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
