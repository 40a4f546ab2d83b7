//! Relative power, energy, throughput and utilization of a workload on the
//! photonic array. Units are arbitrary but consistent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LayerOp, ModelGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub alpha: f64,
    pub beta: f64,
    /// Seconds per matrix-vector product.
    pub t_mvp: f64,
    pub t_weight_send: f64,
    pub t_weight_load: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams::calibrated()
    }
}

impl CostParams {
    /// Gain 2 costs 1.4x at n = 64 and 1.9x at n = 128 relative to gain 1.
    /// Gives `alpha^64 = 13.5`, `beta = 20.25`.
    pub fn calibrated() -> Self {
        let (alpha, beta) = solve_alpha_beta(2.0, (64, 1.4), (128, 1.9)).expect("published ratios are consistent");
        CostParams { alpha, beta, t_mvp: 1e-9, t_weight_send: 40e-9, t_weight_load: 10e-9 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.t_mvp, self.t_weight_send, self.t_weight_load]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.alpha <= 1.0 || self.beta <= 0.0 {
            return Err(Error::Config(format!(
                "cost parameters need alpha > 1 and beta > 0, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if self.t_mvp < 0.0 || self.t_weight_send < 0.0 || self.t_weight_load < 0.0 {
            return Err(Error::Config("cost times must be non-negative".into()));
        }
        Ok(())
    }
}

/// Solves for `(alpha, beta)` given two energy ratios `E(g, n_i) / E(1, n_i) = r_i`.
/// Requires `n2` to be a multiple of `n1` other than `n1` itself.
pub fn solve_alpha_beta(g: f64, (n1, r1): (usize, f64), (n2, r2): (usize, f64)) -> Result<(f64, f64)> {
    if g.is_nan() || g <= 1.0 || n1 == 0 || n2 <= n1 || n2 % n1 != 0 {
        return Err(Error::Domain(format!(
            "cannot calibrate from gain {g} at n = {n1}, {n2}"
        )));
    }
    // (g a + beta) / (a + beta) = r  =>  a = beta (r - 1) / (g - r), with a = alpha^n.
    let coef = |r: f64| {
        if r > 1.0 && r < g {
            Ok((r - 1.0) / (g - r))
        } else {
            Err(Error::Domain(format!("ratio {r} must lie in (1, {g})")))
        }
    };
    let (c1, c2) = (coef(r1)?, coef(r2)?);
    let k = (n2 / n1) as f64;
    let beta = (c2 / c1.powf(k)).powf(1.0 / (k - 1.0));
    let alpha = (c1 * beta).powf(1.0 / n1 as f64);
    Ok((alpha, beta))
}

/// `P(G, n) = (G alpha^n + beta) n`.
pub fn power(g: f64, n: usize, p: &CostParams) -> Result<f64> {
    if !(g > 0.0 && g.is_finite()) || n == 0 {
        return Err(Error::Domain(format!("power needs G > 0 and n >= 1, got G={g}, n={n}")));
    }
    Ok((g * p.alpha.powi(n as i32) + p.beta) * n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerStats {
    pub layer_index: usize,
    /// Lowered weight matrix is `rows x cols`.
    pub rows: usize,
    pub cols: usize,
    /// Input columns per inference.
    pub columns: usize,
    pub row_tiles: usize,
    pub k_tiles: usize,
    pub weight_tiles: usize,
    /// Length-`n` input segments streamed, over the whole batch.
    pub input_vectors: usize,
    pub mvps: usize,
    pub padded_zeros: usize,
    pub total_elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkloadStats {
    pub n: usize,
    pub batch: usize,
    pub layers: Vec<LayerStats>,
    pub weight_tiles: usize,
    pub input_vectors: usize,
    pub mvps: usize,
    pub padded_zeros: usize,
    pub total_elements: usize,
}

impl WorkloadStats {
    /// Fraction of weight-tile elements holding real data; 1 for an empty workload.
    pub fn utilization(&self) -> f64 {
        if self.total_elements == 0 {
            1.0
        } else {
            1.0 - self.padded_zeros as f64 / self.total_elements as f64
        }
    }

    /// `mvps * t_mvp + weight_tiles * (t_send + t_load)`.
    pub fn time(&self, p: &CostParams) -> f64 {
        self.mvps as f64 * p.t_mvp + self.weight_tiles as f64 * (p.t_weight_send + p.t_weight_load)
    }
}

/// Lowered GEMM dimensions `(rows, cols, columns)` for each photocore layer.
fn lowered_dims(model: &ModelGraph) -> Vec<(usize, usize, usize, usize)> {
    let mut dims = Vec::new();
    for i in model.photocore_layers() {
        let input = model.layer_input_shape(i);
        match &model.layers()[i].op {
            LayerOp::Dense { weight } => {
                let s = weight.shape();
                dims.push((i, s[0], s[1], input[1..].iter().product::<usize>()));
            }
            LayerOp::Conv2d { weight, padding, .. } => {
                let s = weight.shape();
                let pixels = (input[1] + 2 * padding) * (input[2] + 2 * padding);
                dims.push((i, s[0] * s[2] * s[3], s[1], pixels));
            }
            _ => {}
        }
    }
    dims
}

/// Shape-only tile and MVP counts for the layers declared on the photocore.
/// Weight tiles are loaded once per batch.
pub fn workload_stats(model: &ModelGraph, n: usize, batch: usize) -> Result<WorkloadStats> {
    if n == 0 || batch == 0 {
        return Err(Error::Domain(format!("need n >= 1 and batch >= 1, got n={n}, batch={batch}")));
    }
    let mut layers = Vec::new();
    for (layer_index, rows, cols, columns) in lowered_dims(model) {
        let row_tiles = rows.div_ceil(n);
        let k_tiles = cols.div_ceil(n);
        let weight_tiles = row_tiles * k_tiles;
        let input_vectors = k_tiles * columns * batch;
        let total_elements = weight_tiles * n * n;
        layers.push(LayerStats {
            layer_index,
            rows,
            cols,
            columns,
            row_tiles,
            k_tiles,
            weight_tiles,
            input_vectors,
            mvps: weight_tiles * columns * batch,
            padded_zeros: total_elements - rows * cols,
            total_elements,
        });
    }
    let sum = |f: fn(&LayerStats) -> usize| layers.iter().map(f).sum::<usize>();
    Ok(WorkloadStats {
        n,
        batch,
        weight_tiles: sum(|l| l.weight_tiles),
        input_vectors: sum(|l| l.input_vectors),
        mvps: sum(|l| l.mvps),
        padded_zeros: sum(|l| l.padded_zeros),
        total_elements: sum(|l| l.total_elements),
        layers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReport {
    pub n: usize,
    pub gain: f64,
    pub batch: usize,
    pub time: f64,
    pub power: f64,
    pub energy: f64,
    /// Inferences per second; infinite for an empty workload.
    pub throughput: f64,
    pub utilization: f64,
}

pub fn cost_report(model: &ModelGraph, n: usize, g: f64, batch: usize, p: &CostParams) -> Result<CostReport> {
    p.validate()?;
    let stats = workload_stats(model, n, batch)?;
    let time = stats.time(p);
    let power = power(g, n, p)?;
    Ok(CostReport {
        n,
        gain: g,
        batch,
        time,
        power,
        energy: time * power,
        throughput: batch as f64 / time,
        utilization: stats.utilization(),
    })
}

/// `E = T * P(G, n)`.
pub fn energy(model: &ModelGraph, n: usize, g: f64, batch: usize, p: &CostParams) -> Result<f64> {
    Ok(cost_report(model, n, g, batch, p)?.energy)
}

/// `batch / T`.
pub fn throughput(model: &ModelGraph, n: usize, g: f64, batch: usize, p: &CostParams) -> Result<f64> {
    Ok(cost_report(model, n, g, batch, p)?.throughput)
}
