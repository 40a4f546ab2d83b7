use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SegmentationSample, BACKGROUND};
use crate::error::{Error, Result};
use crate::model::{Layer, LayerOp, ModelGraph};
use crate::noise::derive_seed;
use crate::tensor::Tensor;

use super::profile::NoiseProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Layers whose parameters are updated; all when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trainable_layers: Option<Vec<usize>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.01, epochs: 5, batch_size: 4, seed: 0, trainable_layers: None }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.trainable_layers.as_ref().is_some_and(|t| t.is_empty()) {
            return Err(Error::Config("trainable_layers must not be empty".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Dense { out: usize, inp: usize },
    Conv { co: usize, ci: usize, kh: usize, kw: usize, stride: usize, padding: usize },
    Relu,
    Bias,
    Argmax,
}

/// Float64 copy of a model for training. Parameters are the dense/conv
/// weights and the biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    model: ModelGraph,
    ops: Vec<Op>,
    params: Vec<Vec<f64>>,
}

/// Additive Gaussian noise at layer outputs, drawn fresh on every pass.
pub struct NoiseInjector {
    /// `(layer, mean, std)`.
    entries: Vec<(usize, f64, f64)>,
    rng: ChaCha8Rng,
}

impl NoiseInjector {
    pub fn new(profile: &NoiseProfile, seed: u64) -> Self {
        NoiseInjector {
            entries: profile.layers.iter().map(|l| (l.layer_index, l.mean, l.std)).collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn apply(&mut self, layer: usize, x: &mut [f64]) {
        if let Some(&(_, mean, std)) = self.entries.iter().find(|e| e.0 == layer) {
            for v in x {
                let z: f64 = self.rng.sample(StandardNormal);
                *v += mean + std * z;
            }
        }
    }
}

impl Network {
    pub fn from_model(model: &ModelGraph) -> Self {
        let mut ops = Vec::new();
        let mut params = Vec::new();
        for layer in model.layers() {
            let to64 = |t: &Tensor| t.data().iter().map(|&v| v as f64).collect::<Vec<_>>();
            let (op, p) = match &layer.op {
                LayerOp::Dense { weight } => {
                    let s = weight.shape();
                    (Op::Dense { out: s[0], inp: s[1] }, to64(weight))
                }
                LayerOp::Conv2d { weight, stride, padding } => {
                    let s = weight.shape();
                    (
                        Op::Conv { co: s[0], ci: s[1], kh: s[2], kw: s[3], stride: *stride, padding: *padding },
                        to64(weight),
                    )
                }
                LayerOp::Relu => (Op::Relu, vec![]),
                LayerOp::AddBias { bias } => (Op::Bias, to64(bias)),
                LayerOp::ArgmaxChannel => (Op::Argmax, vec![]),
            };
            ops.push(op);
            params.push(p);
        }
        Network { model: model.clone(), ops, params }
    }

    /// Rebuilds the model with the current parameters, keeping execution domains.
    pub fn to_model(&self) -> Result<ModelGraph> {
        let layers = self
            .model
            .layers()
            .iter()
            .zip(&self.params)
            .map(|(l, p)| {
                let t = |shape: &[usize]| Tensor::new(shape.to_vec(), p.iter().map(|&v| v as f32).collect());
                let op = match &l.op {
                    LayerOp::Dense { weight } => LayerOp::Dense { weight: t(weight.shape())? },
                    LayerOp::Conv2d { weight, stride, padding } => {
                        LayerOp::Conv2d { weight: t(weight.shape())?, stride: *stride, padding: *padding }
                    }
                    LayerOp::AddBias { bias } => LayerOp::AddBias { bias: t(bias.shape())? },
                    other => other.clone(),
                };
                Ok(Layer { op, domain: l.domain })
            })
            .collect::<Result<Vec<_>>>()?;
        ModelGraph::new(layers, self.model.input_shape().to_vec(), self.model.class_count())
    }

    /// Parameters of each layer; empty for parameter-free layers.
    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.params
    }

    /// Layers evaluated during training: everything before a trailing argmax.
    fn depth(&self) -> usize {
        match self.ops.last() {
            Some(Op::Argmax) => self.ops.len() - 1,
            _ => self.ops.len(),
        }
    }

    fn forward(&self, input: &[f64], mut noise: Option<&mut NoiseInjector>) -> Vec<Vec<f64>> {
        let mut acts = vec![input.to_vec()];
        for i in 0..self.depth() {
            let x = acts.last().unwrap();
            let shape = self.model.layer_input_shape(i);
            let mut y = self.layer_forward(i, shape, x);
            if let Some(n) = noise.as_deref_mut() {
                n.apply(i, &mut y);
            }
            acts.push(y);
        }
        acts
    }

    fn layer_forward(&self, i: usize, shape: &[usize], x: &[f64]) -> Vec<f64> {
        let p = &self.params[i];
        match self.ops[i] {
            Op::Dense { out, inp } => {
                let cols = x.len() / inp;
                let mut y = vec![0.0; out * cols];
                for o in 0..out {
                    for c in 0..inp {
                        let w = p[o * inp + c];
                        if w != 0.0 {
                            for q in 0..cols {
                                y[o * cols + q] += w * x[c * cols + q];
                            }
                        }
                    }
                }
                y
            }
            Op::Conv { co, ci, kh, kw, stride, padding } => {
                let (h, w) = (shape[1], shape[2]);
                let out = self.model.layer_output_shape(i);
                let (ho, wo) = (out[1], out[2]);
                let mut y = vec![0.0; co * ho * wo];
                conv_visit(co, ci, kh, kw, stride, padding, h, w, ho, wo, |yi, wi, xi| {
                    y[yi] += p[wi] * x[xi];
                });
                y
            }
            Op::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
            Op::Bias => {
                let per = x.len() / p.len();
                x.iter().enumerate().map(|(j, &v)| v + p[j / per]).collect()
            }
            Op::Argmax => unreachable!("argmax is excluded from training"),
        }
    }

    fn logits_shape(&self) -> Result<(usize, usize)> {
        let s = self.model.layer_output_shape(self.depth() - 1);
        let k = self.model.class_count();
        if s[0] != k {
            return Err(Error::Model(format!("logits {s:?} do not have {k} channels")));
        }
        Ok((k, s[1..].iter().product()))
    }

    /// Mean softmax cross-entropy over foreground pixels, and its gradient for
    /// every parameter. Injected noise is treated as a constant.
    pub fn loss_and_grad(
        &self,
        samples: &[&SegmentationSample],
        mut noise: Option<&mut NoiseInjector>,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let (k, pixels) = self.logits_shape()?;
        let mut grads: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.len()]).collect();
        let foreground: usize =
            samples.iter().map(|s| s.label.data().iter().filter(|&&l| l != BACKGROUND).count()).sum();
        if foreground == 0 {
            return Ok((0.0, grads));
        }
        let scale = 1.0 / foreground as f64;
        let mut loss = 0.0;
        for s in samples {
            self.model.check_input(&s.image)?;
            if s.label.data().len() != pixels {
                return Err(Error::shape("label does not match logits"));
            }
            let input: Vec<f64> = s.image.data().iter().map(|&v| v as f64).collect();
            let acts = self.forward(&input, noise.as_deref_mut());
            let logits = acts.last().unwrap();
            let mut dy = vec![0.0; logits.len()];
            for (p, &l) in s.label.data().iter().enumerate() {
                if l == BACKGROUND {
                    continue;
                }
                let m = (0..k).map(|c| logits[c * pixels + p]).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = (0..k).map(|c| (logits[c * pixels + p] - m).exp()).sum();
                loss += (m + z.ln() - logits[l as usize * pixels + p]) * scale;
                for c in 0..k {
                    let prob = (logits[c * pixels + p] - m).exp() / z;
                    dy[c * pixels + p] = (prob - if c == l as usize { 1.0 } else { 0.0 }) * scale;
                }
            }
            for i in (0..self.depth()).rev() {
                dy = self.layer_backward(i, &acts[i], &dy, &mut grads[i]);
            }
        }
        Ok((loss, grads))
    }

    /// Noise-free loss.
    pub fn loss(&self, samples: &[&SegmentationSample]) -> Result<f64> {
        Ok(self.loss_and_grad(samples, None)?.0)
    }

    fn layer_backward(&self, i: usize, x: &[f64], dy: &[f64], g: &mut [f64]) -> Vec<f64> {
        let p = &self.params[i];
        match self.ops[i] {
            Op::Dense { out, inp } => {
                let cols = x.len() / inp;
                let mut dx = vec![0.0; x.len()];
                for o in 0..out {
                    for c in 0..inp {
                        let w = p[o * inp + c];
                        let mut acc = 0.0;
                        for q in 0..cols {
                            let d = dy[o * cols + q];
                            acc += d * x[c * cols + q];
                            dx[c * cols + q] += w * d;
                        }
                        g[o * inp + c] += acc;
                    }
                }
                dx
            }
            Op::Conv { co, ci, kh, kw, stride, padding } => {
                let shape = self.model.layer_input_shape(i);
                let out = self.model.layer_output_shape(i);
                let mut dx = vec![0.0; x.len()];
                conv_visit(co, ci, kh, kw, stride, padding, shape[1], shape[2], out[1], out[2], |yi, wi, xi| {
                    g[wi] += dy[yi] * x[xi];
                    dx[xi] += p[wi] * dy[yi];
                });
                dx
            }
            Op::Relu => x.iter().zip(dy).map(|(&v, &d)| if v > 0.0 { d } else { 0.0 }).collect(),
            Op::Bias => {
                let per = x.len() / p.len();
                for (j, &d) in dy.iter().enumerate() {
                    g[j / per] += d;
                }
                dy.to_vec()
            }
            Op::Argmax => unreachable!("argmax is excluded from training"),
        }
    }
}

/// Calls `f(out_index, weight_index, in_index)` for every multiply of a conv.
#[allow(clippy::too_many_arguments)]
fn conv_visit(
    co: usize,
    ci: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    mut f: impl FnMut(usize, usize, usize),
) {
    for o in 0..co {
        for c in 0..ci {
            for a in 0..kh {
                for b in 0..kw {
                    let wi = ((o * ci + c) * kh + a) * kw + b;
                    for oy in 0..ho {
                        let iy = (oy * stride + a) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..wo {
                            let ix = (ox * stride + b) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            f((o * ho + oy) * wo + ox, wi, (c * h + iy as usize) * w + ix as usize);
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ModelGraph,
    /// Noise-free loss over the training set before and after.
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Mean (noisy) batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// SGD on the float32 model with profile noise added at the profiled layer
/// outputs. No quantization runs in the forward pass.
pub fn dnf_train(
    model: &ModelGraph,
    train: &Dataset,
    profile: &NoiseProfile,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    tc.validate()?;
    profile.validate()?;
    let eligible = model.eligible_layers();
    if let Some(l) = profile.layers.iter().find(|l| !eligible.contains(&l.layer_index)) {
        return Err(Error::Model(format!("profile layer {} is not a photocore-eligible layer", l.layer_index)));
    }
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let all: Vec<&SegmentationSample> = train.samples.iter().collect();
    let mut net = Network::from_model(model);
    let initial_loss = net.loss(&all)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, "dnf-shuffle"));
    let mut noise = NoiseInjector::new(profile, derive_seed(tc.seed, "dnf-noise"));
    let mut epoch_losses = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<&SegmentationSample> = chunk.iter().map(|&i| &train.samples[i]).collect();
            let (loss, grads) = net.loss_and_grad(&batch, Some(&mut noise))?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            for (i, (p, g)) in net.params.iter_mut().zip(&grads).enumerate() {
                if tc.trainable_layers.as_ref().is_some_and(|t| !t.contains(&i)) {
                    continue;
                }
                for (w, d) in p.iter_mut().zip(g) {
                    *w -= tc.learning_rate * d;
                }
            }
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::debug!("epoch {epoch}: loss {mean}");
        epoch_losses.push(mean);
    }
    let final_loss = net.loss(&all)?;
    if !final_loss.is_finite() || net.params.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { epoch: tc.epochs, loss: final_loss });
    }
    Ok(TrainOutcome { model: net.to_model()?, initial_loss, final_loss, epoch_losses })
}

/// Plain fine-tuning: `dnf_train` with no injected noise.
pub fn fine_tune(model: &ModelGraph, train: &Dataset, tc: &TrainConfig) -> Result<TrainOutcome> {
    let empty = NoiseProfile { pcnoise_version: super::profile::PROFILE_VERSION, seed: 0, layers: vec![] };
    dnf_train(model, train, &empty, tc)
}
