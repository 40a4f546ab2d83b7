use crate::abfp::{quantize_value, vector_scale, QuantParams};
use crate::bf16::bf16_round_f64;
use crate::noise::{NoiseKey, NoiseSource};

use super::config::Resolved;

/// DAC codes, or raw values when that quantization stage is bypassed.
#[derive(Debug, Clone, PartialEq)]
pub enum Codes {
    Int(Vec<i32>),
    Raw(Vec<f32>),
}

impl Codes {
    fn encode(x: &[f32], scale: f32, params: QuantParams, quantize: bool) -> Codes {
        if !quantize {
            return Codes::Raw(x.to_vec());
        }
        if scale > 0.0 {
            Codes::Int(x.iter().map(|&v| quantize_value(v, scale, params.delta())).collect())
        } else {
            Codes::Int(vec![0; x.len()])
        }
    }

    fn slice(&self, range: std::ops::Range<usize>) -> CodeSlice<'_> {
        match self {
            Codes::Int(v) => CodeSlice::Int(&v[range]),
            Codes::Raw(v) => CodeSlice::Raw(&v[range]),
        }
    }
}

enum CodeSlice<'a> {
    Int(&'a [i32]),
    Raw(&'a [f32]),
}

impl CodeSlice<'_> {
    fn get(&self, j: usize) -> f64 {
        match self {
            CodeSlice::Int(v) => v[j] as f64,
            CodeSlice::Raw(v) => v[j] as f64,
        }
    }
}

/// An `n x n` weight tile ready for the array: codes plus one scale per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTile {
    pub n: usize,
    pub codes: Codes,
    pub row_scales: Vec<f32>,
}

impl EncodedTile {
    /// Per-row bf16 max scales, or `shared_scale` for every row when given.
    pub fn encode(tile: &[f32], cfg: &Resolved, shared_scale: Option<f32>) -> EncodedTile {
        let n = cfg.n;
        assert_eq!(tile.len(), n * n, "tile must be n x n");
        let row_scales: Vec<f32> = match shared_scale {
            Some(s) => vec![s; n],
            None => tile.chunks_exact(n).map(vector_scale).collect(),
        };
        let codes = if cfg.bypass.quantize_weight() {
            let mut q = Vec::with_capacity(n * n);
            for (row, &s) in tile.chunks_exact(n).zip(&row_scales) {
                match Codes::encode(row, s, cfg.weight, true) {
                    Codes::Int(v) => q.extend(v),
                    Codes::Raw(_) => unreachable!(),
                }
            }
            Codes::Int(q)
        } else {
            Codes::Raw(tile.to_vec())
        };
        EncodedTile { n, codes, row_scales }
    }
}

/// A length-`n` input segment: codes plus its scale.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVector {
    pub codes: Codes,
    pub scale: f32,
}

impl EncodedVector {
    pub fn encode(x: &[f32], cfg: &Resolved, shared_scale: Option<f32>) -> EncodedVector {
        let scale = shared_scale.unwrap_or_else(|| vector_scale(x));
        EncodedVector { codes: Codes::encode(x, scale, cfg.input, cfg.bypass.quantize_input()), scale }
    }
}

/// One photonic matrix-vector product: integer tile product, gain, noise,
/// output ADC, dequantization and bf16 rounding. Returns `n` outputs.
pub fn tile_mvp(
    w: &EncodedTile,
    x: &EncodedVector,
    cfg: &Resolved,
    noise: &NoiseSource,
    key: NoiseKey,
) -> Vec<f32> {
    let n = cfg.n;
    let dx = cfg.input.delta() as f64;
    let dw = cfg.weight.delta() as f64;
    let dy = cfg.output.delta() as f64;
    let sx = x.scale as f64;
    let z = if cfg.sigma > 0.0 { noise.normals(key, n) } else { Vec::new() };

    // Raw operands are rescaled into count units so every path shares one readout formula.
    let mx = match x.codes {
        Codes::Int(_) => 1.0,
        Codes::Raw(_) => dx / sx,
    };
    let xs = x.codes.slice(0..n);
    let mut out = vec![0.0f32; n];
    for (i, o) in out.iter_mut().enumerate() {
        let sw = w.row_scales[i] as f64;
        if sw == 0.0 || sx == 0.0 {
            continue;
        }
        let yq = match (&w.codes, &x.codes) {
            (Codes::Int(wq), Codes::Int(xq)) => {
                let row = &wq[i * n..(i + 1) * n];
                row.iter().zip(xq).map(|(&a, &b)| a as i64 * b as i64).sum::<i64>() as f64
            }
            _ => {
                let mw = match w.codes {
                    Codes::Int(_) => 1.0,
                    Codes::Raw(_) => dw / sw,
                };
                let row = w.codes.slice(i * n..(i + 1) * n);
                let dot: f64 = (0..n).map(|j| row.get(j) * xs.get(j)).sum();
                dot * mw * mx
            }
        };
        let eps = if z.is_empty() { 0.0 } else { cfg.sigma * z[i] };
        let v = yq * cfg.gain + eps;
        let y = if cfg.bypass.quantize_output() {
            let level = (v / cfg.full_scale * dy).round().clamp(-dy, dy);
            level * (n as f64 * sw * sx) / (cfg.gain * dy)
        } else {
            v * sw * sx / (cfg.gain * dx * dw)
        };
        *o = bf16_round_f64(y) as f32;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photocore::{Bypass, PhotocoreConfig};

    fn cfg(n: usize, gain: f64, bypass: Bypass) -> Resolved {
        PhotocoreConfig { tile_size: n, gain, bypass, ..Default::default() }
            .with_sigma(0.0)
            .resolve()
            .unwrap()
    }

    fn run(w: &[f32], x: &[f32], c: &Resolved) -> Vec<f32> {
        let wt = EncodedTile::encode(w, c, None);
        let xv = EncodedVector::encode(x, c, None);
        tile_mvp(&wt, &xv, c, &NoiseSource::new(0), NoiseKey::default())
    }

    #[test]
    fn full_bypass_is_exact_product() {
        let c = cfg(2, 1.0, Bypass::All);
        assert_eq!(run(&[1.5, -2.0, 0.25, 4.0], &[2.0, 3.0], &c), vec![-3.0, 12.5]);
    }

    #[test]
    fn identity_hand_example() {
        let c = cfg(2, 1.0, Bypass::None);
        let y = run(&[1.0, 0.0, 0.0, 1.0], &[1.0, -1.0], &c);
        // n * S_W * S_X / delta_y with unit scales.
        let step = 2.0 / 1023.0;
        assert!((y[0] - 1.0).abs() <= step && (y[1] + 1.0).abs() <= step, "{y:?}");
        // Y^q = 63 * 511 against a full scale of 2 * 63 * 511: half range, level 511.5 -> 512.
        assert_eq!(y[0], crate::bf16::bf16_round_f64(512.0 * 2.0 / 1023.0) as f32);
    }

    #[test]
    fn large_gain_saturates() {
        let w = [1.0, 0.0, 0.0, 1.0];
        let x = [1.0, 0.5];
        let low = run(&w, &x, &cfg(2, 1.0, Bypass::None));
        let high = run(&w, &x, &cfg(2, 8.0, Bypass::None));
        // With G = 8 the first output exceeds the ADC range: clipped to n*S/G.
        assert_eq!(high[0], 2.0 / 8.0);
        assert!(high[0] < low[0]);
        let unclipped = run(&w, &x, &cfg(2, 8.0, Bypass::OutputQ));
        assert!(high[0] < unclipped[0]);
    }

    #[test]
    fn zero_weights_give_zero_even_with_noise() {
        let c = PhotocoreConfig { tile_size: 4, ..Default::default() }.with_sigma(500.0).resolve().unwrap();
        let wt = EncodedTile::encode(&[0.0; 16], &c, None);
        let xv = EncodedVector::encode(&[1.0, 2.0, 3.0, 4.0], &c, None);
        let y = tile_mvp(&wt, &xv, &c, &NoiseSource::new(9), NoiseKey::default());
        assert_eq!(y, vec![0.0; 4]);
    }

    #[test]
    fn outputs_are_bf16() {
        let c = cfg(4, 4.0, Bypass::None);
        let w: Vec<f32> = (0..16).map(|i| (i as f32 * 0.37).sin()).collect();
        let y = run(&w, &[0.3, -0.9, 0.11, 0.5], &c);
        assert!(y.iter().all(|&v| crate::bf16::is_bf16_exact(v)));
    }
}
