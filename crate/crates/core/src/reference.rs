//! Float32 reference execution, the baseline every error metric is measured against.

use crate::error::Result;
use crate::model::ModelGraph;
use crate::tensor::Tensor;

/// Runs every layer in full precision.
pub fn reference_forward(model: &ModelGraph, input: &Tensor) -> Result<Tensor> {
    model.check_input(input)?;
    let mut x = input.clone();
    for layer in model.layers() {
        x = layer.forward_f32(&x)?;
    }
    Ok(x)
}

/// Outputs of every layer, in order. `trace[i]` is the output of layer `i`.
pub fn reference_trace(model: &ModelGraph, input: &Tensor) -> Result<Vec<Tensor>> {
    model.check_input(input)?;
    let mut outs: Vec<Tensor> = Vec::with_capacity(model.layers().len());
    for layer in model.layers() {
        let x = outs.last().unwrap_or(input);
        let y = layer.forward_f32(x)?;
        outs.push(y);
    }
    Ok(outs)
}
