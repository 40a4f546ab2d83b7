use serde::Serialize;

use crate::costmodel::{cost_report, CostParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::photocore::{PhotocoreConfig, Placement};

use super::eval::evaluate_simulated;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub gain: f64,
    /// Mean over the noise seeds.
    pub miou: f64,
    pub pixel_acc: f64,
    /// Energy over that of the first row.
    pub energy_rel: f64,
    pub throughput_ips: f64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub tile_sizes: Vec<usize>,
    pub gains: Vec<f64>,
    pub seeds: Vec<u64>,
    pub batch: usize,
}

/// One row per `(n, G)`, ordered by `n` then `G`.
pub fn sweep(
    model: &ModelGraph,
    dataset: &Dataset,
    grid: &SweepGrid,
    base: &PhotocoreConfig,
    params: &CostParams,
) -> Result<Vec<SweepRow>> {
    if grid.tile_sizes.is_empty() || grid.gains.is_empty() || grid.seeds.is_empty() {
        return Err(Error::Config("sweep grid must be non-empty".into()));
    }
    let mut ns = grid.tile_sizes.clone();
    ns.sort_unstable();
    let mut gains = grid.gains.clone();
    gains.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(ns.len() * gains.len());
    for &n in &ns {
        for &gain in &gains {
            let (mut miou, mut acc) = (0.0, 0.0);
            for &seed in &grid.seeds {
                let cfg = PhotocoreConfig { tile_size: n, gain, rng_seed: seed, ..base.clone() };
                let r = evaluate_simulated(model, dataset, &cfg, Placement::Declared)?;
                miou += r.miou;
                acc += r.pixel_accuracy;
            }
            let k = grid.seeds.len() as f64;
            let c = cost_report(model, n, gain, grid.batch, params)?;
            rows.push(SweepRow {
                n,
                gain,
                miou: miou / k,
                pixel_acc: acc / k,
                energy_rel: c.energy,
                throughput_ips: c.throughput,
                utilization: c.utilization,
            });
        }
    }
    let base = rows[0].energy_rel;
    if base > 0.0 {
        rows.iter_mut().for_each(|r| r.energy_rel /= base);
    }
    Ok(rows)
}
