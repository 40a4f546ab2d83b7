//! Sequential model graphs and the JSON model file.
//!
//! A model file is a single JSON document with `"pcmodel_version": 1`. Each
//! tensor parameter is either inline (`{"shape", "format", "base64"}`, the
//! base64 of the little-endian payload) or a reference to a `.pcten` file
//! relative to the model file (`{"path": "..."}`).

use std::fmt;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{ElemFormat, Tensor};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Photocore,
    Digital,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv2d,
    Relu,
    AddBias,
    ArgmaxChannel,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv2d => "conv2d",
            LayerKind::Relu => "relu",
            LayerKind::AddBias => "add_bias",
            LayerKind::ArgmaxChannel => "argmax_channel",
        }
    }

    /// Only matrix products can be mapped onto the photonic array.
    pub fn photocore_capable(self) -> bool {
        matches!(self, LayerKind::Dense | LayerKind::Conv2d)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerOp {
    /// `weight` is `[out, in]`, applied across the leading axis.
    Dense { weight: Tensor },
    /// `weight` is `[c_out, c_in, kh, kw]`.
    Conv2d { weight: Tensor, stride: usize, padding: usize },
    Relu,
    /// `bias` is `[channels]`. Always executes in the digital domain.
    AddBias { bias: Tensor },
    ArgmaxChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub op: LayerOp,
    pub domain: Domain,
}

impl Layer {
    pub fn dense(weight: Tensor, domain: Domain) -> Self {
        Layer { op: LayerOp::Dense { weight }, domain }
    }

    pub fn conv2d(weight: Tensor, stride: usize, padding: usize, domain: Domain) -> Self {
        Layer { op: LayerOp::Conv2d { weight, stride, padding }, domain }
    }

    pub fn relu() -> Self {
        Layer { op: LayerOp::Relu, domain: Domain::Digital }
    }

    pub fn add_bias(bias: Tensor) -> Self {
        Layer { op: LayerOp::AddBias { bias }, domain: Domain::Digital }
    }

    pub fn argmax_channel() -> Self {
        Layer { op: LayerOp::ArgmaxChannel, domain: Domain::Digital }
    }

    pub fn kind(&self) -> LayerKind {
        match self.op {
            LayerOp::Dense { .. } => LayerKind::Dense,
            LayerOp::Conv2d { .. } => LayerKind::Conv2d,
            LayerOp::Relu => LayerKind::Relu,
            LayerOp::AddBias { .. } => LayerKind::AddBias,
            LayerOp::ArgmaxChannel => LayerKind::ArgmaxChannel,
        }
    }

    pub fn weight(&self) -> Option<&Tensor> {
        match &self.op {
            LayerOp::Dense { weight } | LayerOp::Conv2d { weight, .. } => Some(weight),
            _ => None,
        }
    }

    /// Shape produced by this layer for an input of `input` shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match &self.op {
            LayerOp::Dense { weight } => {
                let ws = weight.shape();
                if ws.len() != 2 {
                    return Err(Error::Model(format!("dense weight must be 2-D, got {ws:?}")));
                }
                if input[0] != ws[1] {
                    return Err(Error::shape(format!(
                        "dense expects {} input channels, got shape {input:?}",
                        ws[1]
                    )));
                }
                let mut out = input.to_vec();
                out[0] = ws[0];
                Ok(out)
            }
            LayerOp::Conv2d { weight, stride, padding } => {
                let ws = weight.shape();
                if ws.len() != 4 {
                    return Err(Error::Model(format!("conv2d weight must be 4-D, got {ws:?}")));
                }
                if input.len() != 3 || input[0] != ws[1] {
                    return Err(Error::shape(format!(
                        "conv2d expects [{}, h, w] input, got {input:?}",
                        ws[1]
                    )));
                }
                let (ho, wo) =
                    ops::conv_out_dims((input[1], input[2]), (ws[2], ws[3]), *stride, *padding)?;
                Ok(vec![ws[0], ho, wo])
            }
            LayerOp::Relu => Ok(input.to_vec()),
            LayerOp::AddBias { bias } => {
                if bias.shape() != [input[0]] {
                    return Err(Error::shape(format!(
                        "bias {:?} does not match input {input:?}",
                        bias.shape()
                    )));
                }
                Ok(input.to_vec())
            }
            LayerOp::ArgmaxChannel => {
                Ok(if input.len() > 1 { input[1..].to_vec() } else { vec![1] })
            }
        }
    }

    /// Full-precision evaluation.
    pub fn forward_f32(&self, input: &Tensor) -> Result<Tensor> {
        match &self.op {
            LayerOp::Dense { weight } => ops::dense(weight, input),
            LayerOp::Conv2d { weight, stride, padding } => ops::conv2d(weight, *stride, *padding, input),
            LayerOp::Relu => Ok(ops::relu(input)),
            LayerOp::AddBias { bias } => ops::add_bias(bias, input),
            LayerOp::ArgmaxChannel => Ok(ops::argmax_channel(input)),
        }
    }
}

/// A strictly sequential model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    class_count: usize,
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the model output.
    shapes: Vec<Vec<usize>>,
}

impl ModelGraph {
    pub fn new(layers: Vec<Layer>, input_shape: Vec<usize>, class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::Model("class_count must be positive".into()));
        }
        crate::tensor::element_count(&input_shape)?;
        let mut shapes = vec![input_shape.clone()];
        for (i, layer) in layers.iter().enumerate() {
            if layer.domain == Domain::Photocore && !layer.kind().photocore_capable() {
                return Err(Error::Model(format!(
                    "layer {i} ({}) can only execute in the digital domain",
                    layer.kind()
                )));
            }
            let out = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|e| Error::Model(format!("layer {i} ({}): {e}", layer.kind())))?;
            shapes.push(out);
        }
        Ok(ModelGraph { layers, input_shape, class_count, shapes })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Input shape seen by layer `i`.
    pub fn layer_input_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn layer_output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i + 1]
    }

    /// Layers whose kind could run on the photonic array (dense, conv2d).
    pub fn eligible_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].kind().photocore_capable())
            .collect()
    }

    /// Layers declared to execute on the photonic array.
    pub fn photocore_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].domain == Domain::Photocore)
            .collect()
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    /// Copy with every capable layer assigned to `domain`.
    pub fn with_linear_domain(&self, domain: Domain) -> ModelGraph {
        let mut m = self.clone();
        for l in &mut m.layers {
            if l.kind().photocore_capable() {
                l.domain = domain;
            }
        }
        m
    }

    pub fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::shape(format!(
                "model expects input {:?}, got {:?}",
                self.input_shape,
                input.shape()
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if file.pcmodel_version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "unsupported pcmodel_version {} (expected {MODEL_VERSION})",
                file.pcmodel_version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, rec)| rec.into_layer(base).map_err(|e| Error::Model(format!("layer {i}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        ModelGraph::new(layers, file.input_shape, file.class_count)
    }

    /// Writes the model with inline base64 weights.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(path.as_ref(), false)
    }

    /// Writes the model with each parameter in a sibling `.pcten` file.
    pub fn save_with_external_weights(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(path.as_ref(), true)
    }

    fn write(&self, path: &Path, external: bool) -> Result<()> {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        let base = path.parent().unwrap_or(Path::new("."));
        let mut records = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let tensor_rec = |t: &Tensor, tag: &str| -> Result<TensorRecord> {
                if external {
                    let name = format!("{stem}_{tag}{i}.pcten");
                    t.save(base.join(&name))?;
                    Ok(TensorRecord::File { path: name })
                } else {
                    Ok(TensorRecord::inline(t))
                }
            };
            let mut rec = LayerRecord {
                kind: layer.kind(),
                domain: layer.domain,
                weight: None,
                bias: None,
                stride: None,
                padding: None,
            };
            match &layer.op {
                LayerOp::Dense { weight } => rec.weight = Some(tensor_rec(weight, "w")?),
                LayerOp::Conv2d { weight, stride, padding } => {
                    rec.weight = Some(tensor_rec(weight, "w")?);
                    rec.stride = Some(*stride);
                    rec.padding = Some(*padding);
                }
                LayerOp::AddBias { bias } => rec.bias = Some(tensor_rec(bias, "b")?),
                LayerOp::Relu | LayerOp::ArgmaxChannel => {}
            }
            records.push(rec);
        }
        let file = ModelFile {
            pcmodel_version: MODEL_VERSION,
            input_shape: self.input_shape.clone(),
            class_count: self.class_count,
            layers: records,
        };
        let mut text = serde_json::to_string_pretty(&file).expect("model serialization");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    pcmodel_version: u32,
    input_shape: Vec<usize>,
    class_count: usize,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    kind: LayerKind,
    #[serde(default = "digital")]
    domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<TensorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<TensorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padding: Option<usize>,
}

fn digital() -> Domain {
    Domain::Digital
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TensorRecord {
    Inline { shape: Vec<usize>, format: ElemFormat, base64: String },
    File { path: String },
}

impl TensorRecord {
    fn inline(t: &Tensor) -> Self {
        let bytes = t.to_bytes();
        let hdr = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        TensorRecord::Inline {
            shape: t.shape().to_vec(),
            format: t.format(),
            base64: B64.encode(&bytes[12 + hdr..]),
        }
    }

    fn resolve(self, base: &Path) -> Result<Tensor> {
        match self {
            TensorRecord::File { path } => Tensor::load(base.join(path)),
            TensorRecord::Inline { shape, format, base64 } => {
                let payload = B64
                    .decode(base64.as_bytes())
                    .map_err(|e| Error::Format(format!("base64: {e}")))?;
                let header = serde_json::json!({ "shape": shape, "format": format }).to_string();
                let mut bytes = crate::tensor::TENSOR_MAGIC.to_vec();
                bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
                bytes.extend_from_slice(header.as_bytes());
                bytes.extend_from_slice(&payload);
                Tensor::read_from(&bytes[..])
            }
        }
    }
}

impl LayerRecord {
    fn into_layer(self, base: &Path) -> Result<Layer> {
        let need = |t: Option<TensorRecord>, what: &str| {
            t.ok_or_else(|| Error::Model(format!("{} layer is missing `{what}`", self.kind)))
        };
        let op = match self.kind {
            LayerKind::Dense => LayerOp::Dense { weight: need(self.weight, "weight")?.resolve(base)? },
            LayerKind::Conv2d => LayerOp::Conv2d {
                weight: need(self.weight, "weight")?.resolve(base)?,
                stride: self.stride.unwrap_or(1),
                padding: self.padding.unwrap_or(0),
            },
            LayerKind::Relu => LayerOp::Relu,
            LayerKind::AddBias => LayerOp::AddBias { bias: need(self.bias, "bias")?.resolve(base)? },
            LayerKind::ArgmaxChannel => LayerOp::ArgmaxChannel,
        };
        Ok(Layer { op, domain: self.domain })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> ModelGraph {
        let w0 = Tensor::new(vec![2, 1, 3, 3], (0..18).map(|i| i as f32 * 0.1 - 0.9).collect()).unwrap();
        let w1 = Tensor::new(vec![3, 2], vec![1.0, -1.0, 0.5, 0.25, 2.0, 0.0]).unwrap();
        let b1 = Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap().to_bf16();
        ModelGraph::new(
            vec![
                Layer::conv2d(w0, 1, 1, Domain::Photocore),
                Layer::relu(),
                Layer::dense(w1, Domain::Photocore),
                Layer::add_bias(b1),
                Layer::argmax_channel(),
            ],
            vec![1, 4, 4],
            3,
        )
        .unwrap()
    }

    #[test]
    fn shapes_chain() {
        let m = small_model();
        assert_eq!(m.layer_output_shape(0), &[2, 4, 4]);
        assert_eq!(m.layer_output_shape(2), &[3, 4, 4]);
        assert_eq!(m.output_shape(), &[4, 4]);
        assert_eq!(m.eligible_layers(), vec![0, 2]);
    }

    #[test]
    fn rejects_bad_graphs() {
        let w = Tensor::new(vec![3, 2], vec![0.0; 6]).unwrap();
        assert!(ModelGraph::new(vec![Layer::dense(w.clone(), Domain::Digital)], vec![3], 2).is_err());
        let relu_on_core = Layer { op: LayerOp::Relu, domain: Domain::Photocore };
        assert!(ModelGraph::new(vec![relu_on_core], vec![3], 2).is_err());
        assert!(ModelGraph::new(vec![Layer::dense(w, Domain::Digital)], vec![2], 0).is_err());
    }

    #[test]
    fn file_round_trip_inline_and_external() {
        let m = small_model();
        let dir = tempfile::tempdir().unwrap();
        let inline = dir.path().join("inline.json");
        m.save(&inline).unwrap();
        assert_eq!(ModelGraph::load(&inline).unwrap(), m);
        let text = fs::read_to_string(&inline).unwrap();
        assert!(text.contains("\"pcmodel_version\": 1"));

        let ext = dir.path().join("ext.json");
        m.save_with_external_weights(&ext).unwrap();
        assert!(dir.path().join("ext_w0.pcten").exists());
        assert_eq!(ModelGraph::load(&ext).unwrap(), m);
    }

    #[test]
    fn rejects_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        fs::write(&p, r#"{"pcmodel_version":2,"input_shape":[1],"class_count":1,"layers":[]}"#).unwrap();
        assert!(matches!(ModelGraph::load(&p), Err(Error::Model(_))));
    }
}
