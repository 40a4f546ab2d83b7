//! Adaptive block floating point: one bf16 scale per length-`n` vector, and
//! the symmetric quantizer `clip(round(x / scale * delta), -delta, delta)`.
//!
//! Rounding is half-away-from-zero, so `quantize(-x) == -quantize(x)`.

use crate::bf16::bf16_round;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantParams {
    bits: u32,
    delta: i32,
}

impl QuantParams {
    /// `delta = 2^(bits-1) - 1`. Bits must lie in `2..=24`.
    pub fn new(bits: u32) -> Result<Self> {
        if !(2..=24).contains(&bits) {
            return Err(Error::Config(format!("quantizer bits must be in 2..=24, got {bits}")));
        }
        Ok(QuantParams { bits, delta: (1 << (bits - 1)) - 1 })
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn delta(self) -> i32 {
        self.delta
    }
}

/// Quantizes one value against a positive scale.
#[inline]
pub fn quantize_value(x: f32, scale: f32, delta: i32) -> i32 {
    let d = delta as f64;
    let level = (x as f64 / scale as f64 * d).round();
    level.clamp(-d, d) as i32
}

pub fn quantize(x: &[f32], scale: f32, params: QuantParams) -> Result<Vec<i32>> {
    if scale.is_nan() || scale <= 0.0 {
        if x.iter().all(|&v| v == 0.0) {
            return Ok(vec![0; x.len()]);
        }
        return Err(Error::Domain(format!("quantization scale must be positive, got {scale}")));
    }
    Ok(x.iter().map(|&v| quantize_value(v, scale, params.delta)).collect())
}

/// `q / delta * scale`; a zero scale dequantizes to zero.
pub fn dequantize(q: &[i32], scale: f32, params: QuantParams) -> Vec<f32> {
    let d = params.delta as f64;
    q.iter().map(|&v| (v as f64 / d * scale as f64) as f32).collect()
}

/// `bf16(max |x|)`.
pub fn vector_scale(x: &[f32]) -> f32 {
    bf16_round(x.iter().fold(0.0f32, |m, &v| m.max(v.abs())))
}

/// One scale per row of a row-major `n x n` tile.
pub fn extract_row_scales(tile: &[f32], n: usize) -> Vec<f32> {
    assert_eq!(tile.len(), n * n, "tile must be n x n");
    tile.chunks_exact(n).map(vector_scale).collect()
}

/// Global-max scale over a whole tensor, the non-ABFP baseline.
pub fn per_tensor_scale(x: &[f32]) -> f32 {
    vector_scale(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTile {
    pub n: usize,
    /// Row-major `n x n` DAC codes.
    pub q: Vec<i32>,
    pub row_scales: Vec<f32>,
    pub params: QuantParams,
}

pub fn quantize_tile(tile: &[f32], n: usize, params: QuantParams) -> Result<QuantizedTile> {
    if tile.len() != n * n {
        return Err(Error::shape(format!("tile of {} values is not {n}x{n}", tile.len())));
    }
    let row_scales = extract_row_scales(tile, n);
    let mut q = Vec::with_capacity(n * n);
    for (row, &s) in tile.chunks_exact(n).zip(&row_scales) {
        q.extend(quantize(row, s, params)?);
    }
    Ok(QuantizedTile { n, q, row_scales, params })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    pub q: Vec<i32>,
    pub scale: f32,
    pub params: QuantParams,
}

pub fn quantize_input_vector(x: &[f32], params: QuantParams) -> Result<QuantizedVector> {
    let scale = vector_scale(x);
    Ok(QuantizedVector { q: quantize(x, scale, params)?, scale, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(bits: u32) -> QuantParams {
        QuantParams::new(bits).unwrap()
    }

    #[test]
    fn deltas() {
        assert_eq!(p(7).delta(), 63);
        assert_eq!(p(10).delta(), 511);
        assert_eq!(p(11).delta(), 1023);
        assert!(QuantParams::new(1).is_err());
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(&[1.0, -0.5, 0.25], 1.0, p(7)).unwrap(), vec![63, -32, 16]);
        assert_eq!(quantize(&[0.0; 3], 0.0, p(7)).unwrap(), vec![0, 0, 0]);
        assert_eq!(quantize(&[0.0; 3], 3.0, p(7)).unwrap(), vec![0, 0, 0]);
        assert_eq!(quantize(&[2.0], 1.0, p(7)).unwrap(), vec![63]);
        assert!(matches!(quantize(&[1.0], 0.0, p(7)), Err(Error::Domain(_))));
        assert!(quantize(&[1.0], -1.0, p(7)).is_err());
    }

    #[test]
    fn row_scales() {
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 5] = 1.0;
        }
        assert_eq!(extract_row_scales(&eye, 4), vec![1.0; 4]);
        let t = [3.0, -7.0, 2.0, 5.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let s = extract_row_scales(&t, 4);
        assert_eq!(s[0], 7.0);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn diagonal_tile() {
        let mut t = vec![0.0; 16];
        for (i, v) in [1.0, 2.0, 4.0, 8.0].into_iter().enumerate() {
            t[i * 5] = v;
        }
        let qt = quantize_tile(&t, 4, p(7)).unwrap();
        assert_eq!(qt.row_scales, vec![1.0, 2.0, 4.0, 8.0]);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(qt.q[i * 4 + j], if i == j { 63 } else { 0 });
            }
        }
        let z = quantize_tile(&[0.0; 16], 4, p(7)).unwrap();
        assert!(z.q.iter().all(|&v| v == 0) && z.row_scales.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn non_bf16_row_max_lands_on_delta() {
        // 1.0035 rounds down to 1.0 in bf16; 1.0035 * 63 = 63.22 rounds to 63.
        let mut t = vec![0.0; 4];
        t[0] = 1.0035;
        t[1] = -0.3;
        let qt = quantize_tile(&t, 2, p(7)).unwrap();
        assert_eq!(qt.row_scales[0], 1.0);
        assert_eq!(qt.q[0], 63);
        assert_eq!(quantize_value(1.02, 1.0, 63), 63);
        assert!(qt.q.iter().all(|v| v.abs() <= 63));
    }

    #[test]
    fn input_vector_examples() {
        let v = quantize_input_vector(&[0.5, -1.0], p(10)).unwrap();
        assert_eq!(v.scale, 1.0);
        assert_eq!(v.q, vec![256, -511]);
        let e = quantize_input_vector(&[0.0, 0.0, 1.0, 0.0], p(10)).unwrap();
        assert_eq!((e.scale, e.q), (1.0, vec![0, 0, 511, 0]));
        let z = quantize_input_vector(&[0.0; 3], p(10)).unwrap();
        assert_eq!((z.scale, z.q), (0.0, vec![0; 3]));
    }

    #[test]
    fn per_tensor_examples() {
        assert_eq!(per_tensor_scale(&[1.0, -9.0, 3.0, 2.0]), 9.0);
        assert_eq!(per_tensor_scale(&[0.0; 4]), 0.0);
        let mut m = vec![0.5f32; 16];
        m[5] = 1000.0;
        assert_eq!(per_tensor_scale(&m), 1000.0);
    }

    fn mse(x: &[f32], scales: &[f32], n: usize, params: QuantParams) -> f64 {
        x.chunks(n)
            .zip(scales)
            .map(|(row, &s)| {
                let q = quantize(row, s, params).unwrap();
                dequantize(&q, s, params)
                    .iter()
                    .zip(row)
                    .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / x.len() as f64
    }

    proptest! {
        #[test]
        fn odd_symmetry(xs in proptest::collection::vec(-10.0f32..10.0, 1..32), s in 0.01f32..20.0) {
            let neg: Vec<f32> = xs.iter().map(|v| -v).collect();
            let a = quantize(&xs, s, p(7)).unwrap();
            let b = quantize(&neg, s, p(7)).unwrap();
            prop_assert_eq!(a.iter().map(|v| -v).collect::<Vec<_>>(), b);
        }

        #[test]
        fn codes_bounded_and_max_hits_delta(xs in proptest::collection::vec(-10.0f32..10.0, 1..32)) {
            let v = quantize_input_vector(&xs, p(10)).unwrap();
            let m = v.q.iter().map(|q| q.abs()).max().unwrap();
            prop_assert!(m <= 511);
            if v.scale > 0.0 {
                // The scale is within 2^-8 relative of the max element.
                prop_assert!(m >= 509);
            }
        }

        #[test]
        fn exact_scale_max_equals_delta(xs in proptest::collection::vec(-8.0f32..8.0, 1..32)) {
            let xs: Vec<f32> = xs.iter().map(|&v| crate::bf16::bf16_round(v)).collect();
            let v = quantize_input_vector(&xs, p(10)).unwrap();
            prop_assume!(v.scale > 0.0);
            prop_assert_eq!(v.q.iter().map(|q| q.abs()).max().unwrap(), 511);
        }

        #[test]
        fn dequantization_error_bound(xs in proptest::collection::vec(-10.0f32..10.0, 1..32)) {
            let params = p(7);
            let v = quantize_input_vector(&xs, params).unwrap();
            prop_assume!(v.scale > 0.0);
            let raw_max = xs.iter().fold(0.0f32, |m, &x| m.max(x.abs())) as f64;
            let bf16_err = (raw_max - v.scale as f64).abs();
            let d = dequantize(&v.q, v.scale, params);
            for (x, y) in xs.iter().zip(&d) {
                let bound = v.scale as f64 / (2.0 * 63.0) + bf16_err + 1e-6;
                prop_assert!((*x as f64 - *y as f64).abs() <= bound);
            }
        }

        #[test]
        fn per_row_beats_per_tensor(seed in any::<u64>(), n in 4usize..16) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rows = 8;
            let mut m = Vec::with_capacity(rows * n);
            for r in 0..rows {
                // Row magnitudes spread by at least 2x per row.
                let mag = 2f32.powi(r as i32 * 2);
                for _ in 0..n {
                    m.push(rng.random_range(-1.0f32..1.0) * mag);
                }
            }
            let params = p(7);
            let row_scales: Vec<f32> = m.chunks(n).map(vector_scale).collect();
            let global = vec![per_tensor_scale(&m); rows];
            let e_row = mse(&m, &row_scales, n, params);
            let e_tensor = mse(&m, &global, n, params);
            prop_assert!(e_row < e_tensor, "{e_row} vs {e_tensor}");
        }
    }
}
