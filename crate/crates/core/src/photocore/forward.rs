use crate::error::{Error, Result};
use crate::model::{Domain, Layer, LayerOp, ModelGraph};
use crate::noise::NoiseSource;
use crate::ops::channel_matrix;
use crate::tensor::{Matrix, Tensor};

use super::config::{PhotocoreConfig, Resolved};
use super::gemm::gemm_resolved;
use super::kn2row::lower_conv_kn2row;

/// Which layers execute on the photonic array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Placement {
    /// Each layer's declared domain.
    #[default]
    Declared,
    /// Only the given layer, everything else digital.
    Only(usize),
    AllDigital,
}

impl Placement {
    fn on_photocore(self, index: usize, layer: &Layer) -> bool {
        match self {
            Placement::Declared => layer.domain == Domain::Photocore,
            Placement::Only(i) => i == index && layer.kind().photocore_capable(),
            Placement::AllDigital => false,
        }
    }
}

/// Runs one dense or conv2d layer through the simulated array.
pub fn photocore_layer(
    layer: &Layer,
    index: usize,
    input: &Tensor,
    cfg: &Resolved,
    noise: &NoiseSource,
) -> Result<Tensor> {
    let key = index as u32;
    match &layer.op {
        LayerOp::Dense { weight } => {
            let ws = weight.shape();
            if ws.len() != 2 || input.shape()[0] != ws[1] {
                return Err(Error::shape(format!(
                    "dense weight {ws:?} does not accept input {:?}",
                    input.shape()
                )));
            }
            let w = Matrix::new(ws[0], ws[1], weight.data().to_vec())?;
            let y = gemm_resolved(&w, &channel_matrix(input), cfg, noise, key)?;
            let mut shape = input.shape().to_vec();
            shape[0] = ws[0];
            Tensor::new(shape, y.into_data())
        }
        LayerOp::Conv2d { weight, stride, padding } => {
            let l = lower_conv_kn2row(weight, *stride, *padding, input)?;
            let partial = gemm_resolved(&l.weight, &l.input, cfg, noise, key)?;
            l.recompose(&partial)
        }
        _ => Err(Error::Model(format!("{} layers cannot run on the photocore", layer.kind()))),
    }
}

/// Outputs of every layer under `placement`.
pub fn simulate_trace(
    model: &ModelGraph,
    input: &Tensor,
    cfg: &PhotocoreConfig,
    noise: &NoiseSource,
    placement: Placement,
) -> Result<Vec<Tensor>> {
    model.check_input(input)?;
    let resolved = cfg.resolve()?;
    let mut outs: Vec<Tensor> = Vec::with_capacity(model.layers().len());
    for (i, layer) in model.layers().iter().enumerate() {
        let x = outs.last().unwrap_or(input);
        let y = if placement.on_photocore(i, layer) {
            photocore_layer(layer, i, x, &resolved, noise)?
        } else {
            layer.forward_f32(x)?
        };
        outs.push(y);
    }
    Ok(outs)
}

pub fn simulate_forward_with(
    model: &ModelGraph,
    input: &Tensor,
    cfg: &PhotocoreConfig,
    noise: &NoiseSource,
    placement: Placement,
) -> Result<Tensor> {
    let mut t = simulate_trace(model, input, cfg, noise, placement)?;
    Ok(t.pop().unwrap_or_else(|| input.clone()))
}

/// Whole-model inference with each layer in its declared domain.
pub fn simulate_forward(
    model: &ModelGraph,
    input: &Tensor,
    cfg: &PhotocoreConfig,
    noise: &NoiseSource,
) -> Result<Tensor> {
    simulate_forward_with(model, input, cfg, noise, Placement::Declared)
}
