use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::reference::reference_trace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeUtilization {
    pub layer_index: usize,
    /// Largest FP32 output magnitude, the normalizer.
    pub max_abs: f64,
    pub mean: f64,
    pub std: f64,
    /// `2 * delta + 1` bins over `[-1, 1]`, summing to 1.
    pub histogram: Vec<f64>,
    pub three_sigma_level_fraction: f64,
}

/// Distribution statistics of normalized values against `2 * delta + 1` output levels.
pub fn range_stats(values: &[f32], delta: i32) -> (f64, f64, f64, Vec<f64>, f64) {
    let d = delta as f64;
    let s = values.iter().fold(0.0f64, |m, &v| m.max((v as f64).abs()));
    let norm = |v: f32| if s > 0.0 { v as f64 / s } else { 0.0 };
    let count = values.len().max(1) as f64;
    let mean = values.iter().map(|&v| norm(v)).sum::<f64>() / count;
    let var = values.iter().map(|&v| (norm(v) - mean).powi(2)).sum::<f64>() / count;
    let std = var.sqrt();
    let mut hist = vec![0.0; 2 * delta as usize + 1];
    for &v in values {
        let bin = (norm(v) * d).round().clamp(-d, d) as i64 + delta as i64;
        hist[bin as usize] += 1.0;
    }
    hist.iter_mut().for_each(|h| *h /= count);
    let lo = ((mean - 3.0 * std) * d).ceil().max(-d);
    let hi = ((mean + 3.0 * std) * d).floor().min(d);
    let levels = if hi >= lo { hi - lo + 1.0 } else { 1.0 };
    (s, mean, std, hist, levels / (2.0 * d + 1.0))
}

/// FP32 outputs of `layer_index` pooled over the dataset.
pub fn range_utilization(
    model: &ModelGraph,
    dataset: &Dataset,
    layer_index: usize,
    output_bits: u32,
) -> Result<RangeUtilization> {
    if layer_index >= model.layers().len() {
        return Err(Error::Model(format!("no layer {layer_index}")));
    }
    let delta = crate::abfp::QuantParams::new(output_bits)?.delta();
    let mut values = Vec::new();
    for s in &dataset.samples {
        let trace = reference_trace(model, &s.image)?;
        values.extend_from_slice(trace[layer_index].data());
    }
    let (max_abs, mean, std, histogram, frac) = range_stats(&values, delta);
    Ok(RangeUtilization { layer_index, max_abs, mean, std, histogram, three_sigma_level_fraction: frac })
}
