use rayon::prelude::*;

use crate::dataset::{Dataset, LabelMask};
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::noise::NoiseSource;
use crate::ops::argmax_channel;
use crate::photocore::{simulate_forward_with, PhotocoreConfig, Placement};
use crate::reference::reference_forward;
use crate::tensor::Tensor;

use super::metrics::{Confusion, MetricReport};

/// Class mask from a model output: `[H, W]` class ids, or `[K, H, W]` scores.
pub fn prediction_mask(output: &Tensor) -> Result<LabelMask> {
    let t = match output.shape().len() {
        2 => output.clone(),
        3 => argmax_channel(output),
        _ => {
            return Err(Error::shape(format!(
                "cannot read a segmentation mask from output {:?}",
                output.shape()
            )))
        }
    };
    let s = t.shape();
    LabelMask::new(s[0], s[1], t.data().iter().map(|&v| v as i32).collect())
}

/// How each sample is executed.
#[derive(Debug, Clone, Copy)]
pub enum Executor<'a> {
    Reference,
    Simulated { cfg: &'a PhotocoreConfig, placement: Placement },
}

impl Executor<'_> {
    /// Model output for dataset sample `index`; noise streams are keyed by the sample.
    pub fn run(&self, model: &ModelGraph, input: &Tensor, index: usize) -> Result<Tensor> {
        match *self {
            Executor::Reference => reference_forward(model, input),
            Executor::Simulated { cfg, placement } => {
                let noise = NoiseSource::new(cfg.rng_seed).for_sample(index as u64);
                simulate_forward_with(model, input, cfg, &noise, placement)
            }
        }
    }
}

/// Predicted masks for every sample, in dataset order.
pub fn predict(model: &ModelGraph, dataset: &Dataset, exec: Executor<'_>) -> Result<Vec<LabelMask>> {
    crate::photocore::run_parallel(|| {
        dataset
            .samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| prediction_mask(&exec.run(model, &s.image, i)?))
            .collect()
    })
}

pub fn score(model: &ModelGraph, dataset: &Dataset, masks: &[LabelMask]) -> Result<MetricReport> {
    let mut c = Confusion::new(model.class_count());
    for (m, s) in masks.iter().zip(&dataset.samples) {
        c.add(m, &s.label)?;
    }
    c.report()
}

pub fn evaluate(model: &ModelGraph, dataset: &Dataset, exec: Executor<'_>) -> Result<MetricReport> {
    score(model, dataset, &predict(model, dataset, exec)?)
}

pub fn evaluate_reference(model: &ModelGraph, dataset: &Dataset) -> Result<MetricReport> {
    evaluate(model, dataset, Executor::Reference)
}

pub fn evaluate_simulated(
    model: &ModelGraph,
    dataset: &Dataset,
    cfg: &PhotocoreConfig,
    placement: Placement,
) -> Result<MetricReport> {
    evaluate(model, dataset, Executor::Simulated { cfg, placement })
}
