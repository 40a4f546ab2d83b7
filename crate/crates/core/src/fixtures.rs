//! Synthetic segmentation tasks and toy models with known statistical
//! properties, plus shape-only workloads for the cost model.
//!
//! Images are `[4, H, W]`: RGB plus a constant ones channel that lets
//! convolutions carry biases. Each image shows a few rectangles of class
//! prototype colours on a grey, background-labelled canvas.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::dnf::TrainConfig;
use crate::dataset::{Dataset, LabelMask, SegmentationSample, BACKGROUND};
use crate::error::{Error, Result};
use crate::model::{Domain, Layer, ModelGraph};
use crate::noise::derive_seed;
use crate::photocore::PhotocoreConfig;
use crate::tensor::{ElemFormat, Tensor};

pub const CLASSES: usize = 4;
pub const IMAGE_SIZE: usize = 16;
pub const EVAL_SAMPLES: usize = 12;
pub const TRAIN_SAMPLES: usize = 24;

const PROTOTYPES: [[f32; 3]; CLASSES] =
    [[0.9, 0.15, 0.1], [0.1, 0.8, 0.2], [0.15, 0.25, 0.9], [0.85, 0.8, 0.15]];
const GREY: [f32; 3] = [0.5, 0.5, 0.5];
const PIXEL_NOISE: f32 = 0.05;
/// Score offset keeping the winning class positive through ReLU.
const SCORE_OFFSET: f32 = 1.5;
/// Magnitude of the outlier channel.
pub const OUTLIER: f32 = 100.0;
const REPLICAS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    Uniform,
    OutlierLayer,
    OutlierRow,
    Saturating,
    CnnWorkload,
    MaskformerWorkload,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 6] = [
        FixtureKind::Uniform,
        FixtureKind::OutlierLayer,
        FixtureKind::OutlierRow,
        FixtureKind::Saturating,
        FixtureKind::CnnWorkload,
        FixtureKind::MaskformerWorkload,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FixtureKind::Uniform => "uniform",
            FixtureKind::OutlierLayer => "outlier-layer",
            FixtureKind::OutlierRow => "outlier-row",
            FixtureKind::Saturating => "saturating",
            FixtureKind::CnnWorkload => "cnn-workload",
            FixtureKind::MaskformerWorkload => "maskformer-workload",
        }
    }
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixtureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown fixture kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub kind: FixtureKind,
    pub seed: u64,
    pub model: ModelGraph,
    pub data: Dataset,
    pub train: Dataset,
    /// Layer carrying the fixture's defining property, if any.
    pub target_layer: Option<usize>,
    /// Suggested simulator settings.
    pub photocore: PhotocoreConfig,
    /// Suggested fine-tuning settings.
    pub dnf: TrainConfig,
    pub description: &'static str,
}

pub fn generate(kind: FixtureKind, seed: u64) -> Result<Fixture> {
    let data_seed = derive_seed(seed, "fixture-data");
    let train_seed = derive_seed(seed, "fixture-train");
    let images = |s| segmentation_dataset(if s == data_seed { EVAL_SAMPLES } else { TRAIN_SAMPLES }, s);
    let default_cfg = PhotocoreConfig { rng_seed: derive_seed(seed, "fixture-noise"), ..Default::default() };
    let f = match kind {
        FixtureKind::Uniform => Fixture {
            kind,
            seed,
            model: prototype_net(OutlierMode::None)?,
            data: images(data_seed),
            train: images(train_seed),
            target_layer: None,
            photocore: default_cfg.clone(),
            dnf: TrainConfig::default(),
            description: "three-layer prototype classifier with evenly scaled channels",
        },
        FixtureKind::OutlierLayer => Fixture {
            kind,
            seed,
            model: prototype_net(OutlierMode::PassThrough)?,
            data: images(data_seed),
            train: images(train_seed),
            target_layer: Some(2),
            photocore: default_cfg.clone(),
            dnf: TrainConfig {
                learning_rate: 0.3,
                epochs: 20,
                trainable_layers: Some(vec![0]),
                ..TrainConfig::default()
            },
            description: "layer 2 consumes an outlier channel and passes it on scaled 100x",
        },
        FixtureKind::OutlierRow => Fixture {
            kind,
            seed,
            model: prototype_net(OutlierMode::DeadRow)?,
            data: images(data_seed),
            train: images(train_seed),
            target_layer: Some(0),
            photocore: default_cfg.clone(),
            dnf: TrainConfig::default(),
            description: "layer 0 has one weight row 100x larger than the rest, removed by ReLU",
        },
        FixtureKind::Saturating => Fixture {
            kind,
            seed,
            model: saturating_net()?,
            data: images(data_seed),
            train: images(train_seed),
            target_layer: Some(0),
            photocore: PhotocoreConfig {
                tile_size: SATURATING_TILE,
                noise_sigma: None,
                noise_adc_steps: SATURATING_SIGMA_STEPS,
                ..default_cfg.clone()
            },
            dnf: TrainConfig::default(),
            description: "single-layer classifier near the output ADC range under strong noise",
        },
        FixtureKind::CnnWorkload => Fixture {
            kind,
            seed,
            model: cnn_workload()?,
            data: Dataset::default(),
            train: Dataset::default(),
            target_layer: None,
            photocore: default_cfg.clone(),
            dnf: TrainConfig::default(),
            description: "shape-only four-layer convolutional workload on 32x32 inputs",
        },
        FixtureKind::MaskformerWorkload => Fixture {
            kind,
            seed,
            model: maskformer_workload()?,
            data: Dataset::default(),
            train: Dataset::default(),
            target_layer: None,
            photocore: default_cfg.clone(),
            dnf: TrainConfig::default(),
            description: "shape-only transformer-style workload of wide dense layers over 1024 tokens",
        },
    };
    Ok(f)
}

/// Random rectangles of class colours on a grey background.
pub fn segmentation_dataset(count: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, PIXEL_NOISE).expect("valid std");
    let s = IMAGE_SIZE;
    let samples = (0..count)
        .map(|_| {
            let mut label = vec![BACKGROUND; s * s];
            for _ in 0..rng.random_range(2..=4) {
                let class = rng.random_range(0..CLASSES as i32);
                let (h, w) = (rng.random_range(3..=9), rng.random_range(3..=9));
                let (y0, x0) = (rng.random_range(0..=s - h), rng.random_range(0..=s - w));
                for y in y0..y0 + h {
                    label[y * s + x0..y * s + x0 + w].fill(class);
                }
            }
            let mut image = vec![0.0f32; 4 * s * s];
            for (p, &l) in label.iter().enumerate() {
                let colour = if l == BACKGROUND { GREY } else { PROTOTYPES[l as usize] };
                for c in 0..3 {
                    image[c * s * s + p] = colour[c] + noise.sample(&mut rng);
                }
                image[3 * s * s + p] = 1.0;
            }
            SegmentationSample {
                image: Tensor::new(vec![4, s, s], image).expect("image shape"),
                label: LabelMask::new(s, s, label).expect("label shape"),
            }
        })
        .collect();
    Dataset::new(samples)
}

#[derive(Clone, Copy, PartialEq)]
enum OutlierMode {
    None,
    /// Layer 0 emits an outlier channel that layer 2 consumes and re-emits negated.
    PassThrough,
    /// Layer 0 holds a huge negative row that ReLU removes.
    DeadRow,
}

/// Replica gains of the expansion layer.
fn replica_gain(j: usize) -> f32 {
    0.5 + j as f32 / REPLICAS as f32
}

/// conv3x3 -> relu -> conv1x1 expansion -> relu -> dense -> argmax.
fn prototype_net(mode: OutlierMode) -> Result<ModelGraph> {
    let extra = usize::from(mode != OutlierMode::None);
    let c0 = CLASSES + extra;
    let mut w0 = vec![0.0f32; c0 * 4 * 9];
    let tap = |a: usize, b: usize| if (a, b) == (1, 1) { 0.5 } else { 0.0625 };
    for (k, proto) in PROTOTYPES.iter().enumerate() {
        for (ch, &pc) in proto.iter().enumerate() {
            for a in 0..3 {
                for b in 0..3 {
                    w0[((k * 4 + ch) * 3 + a) * 3 + b] = pc * tap(a, b);
                }
            }
        }
        let norm2: f32 = proto.iter().map(|v| v * v).sum();
        w0[((k * 4 + 3) * 3 + 1) * 3 + 1] = SCORE_OFFSET - norm2 / 2.0;
    }
    match mode {
        OutlierMode::None => {}
        OutlierMode::PassThrough => w0[((CLASSES * 4 + 3) * 3 + 1) * 3 + 1] = OUTLIER,
        OutlierMode::DeadRow => w0[((CLASSES * 4 + 3) * 3 + 1) * 3 + 1] = -OUTLIER,
    }
    let pass = usize::from(mode == OutlierMode::PassThrough);
    let c1 = CLASSES * REPLICAS + pass;
    let mut w1 = vec![0.0f32; c1 * c0];
    for k in 0..CLASSES {
        for j in 0..REPLICAS {
            w1[(k * REPLICAS + j) * c0 + k] = replica_gain(j);
        }
    }
    if pass == 1 {
        w1[(c1 - 1) * c0 + CLASSES] = -1.0;
    }
    let mut w2 = vec![0.0f32; CLASSES * c1];
    for k in 0..CLASSES {
        for j in 0..REPLICAS {
            w2[k * c1 + k * REPLICAS + j] = 1.0 / (replica_gain(j) * REPLICAS as f32);
        }
    }
    let s = IMAGE_SIZE;
    ModelGraph::new(
        vec![
            Layer::conv2d(Tensor::new(vec![c0, 4, 3, 3], w0)?, 1, 1, Domain::Photocore),
            Layer::relu(),
            Layer::conv2d(Tensor::new(vec![c1, c0, 1, 1], w1)?, 1, 0, Domain::Photocore),
            Layer::relu(),
            Layer::dense(Tensor::new(vec![CLASSES, c1], w2)?, Domain::Photocore),
            Layer::argmax_channel(),
        ],
        vec![4, s, s],
        CLASSES,
    )
}

const SATURATING_TILE: usize = 8;
const SATURATING_SIGMA_STEPS: f64 = 40.0;

/// A single 1x1 conv computing prototype scores, then argmax.
fn saturating_net() -> Result<ModelGraph> {
    let mut w = vec![0.0f32; CLASSES * 4];
    for (k, proto) in PROTOTYPES.iter().enumerate() {
        w[k * 4..k * 4 + 3].copy_from_slice(proto);
        let norm2: f32 = proto.iter().map(|v| v * v).sum();
        w[k * 4 + 3] = SCORE_OFFSET - norm2 / 2.0;
    }
    let s = IMAGE_SIZE;
    ModelGraph::new(
        vec![
            Layer::conv2d(Tensor::new(vec![CLASSES, 4, 1, 1], w)?, 1, 0, Domain::Photocore),
            Layer::argmax_channel(),
        ],
        vec![4, s, s],
        CLASSES,
    )
}

fn zeros(shape: Vec<usize>) -> Result<Tensor> {
    let len = shape.iter().product();
    Tensor::with_format(shape, vec![0.0; len], ElemFormat::Bf16)
}

fn cnn_workload() -> Result<ModelGraph> {
    let channels = [3usize, 64, 128, 256, 256];
    let mut layers = Vec::new();
    for pair in channels.windows(2) {
        layers.push(Layer::conv2d(zeros(vec![pair[1], pair[0], 3, 3])?, 1, 1, Domain::Photocore));
        layers.push(Layer::relu());
    }
    layers.push(Layer::dense(zeros(vec![CLASSES, 256])?, Domain::Photocore));
    layers.push(Layer::argmax_channel());
    ModelGraph::new(layers, vec![3, 32, 32], CLASSES)
}

fn maskformer_workload() -> Result<ModelGraph> {
    let (d, hidden, blocks) = (512usize, 2048usize, 4);
    let mut layers = Vec::new();
    for _ in 0..blocks {
        layers.push(Layer::dense(zeros(vec![hidden, d])?, Domain::Photocore));
        layers.push(Layer::relu());
        layers.push(Layer::dense(zeros(vec![d, hidden])?, Domain::Photocore));
    }
    layers.push(Layer::dense(zeros(vec![CLASSES, d])?, Domain::Photocore));
    layers.push(Layer::argmax_channel());
    ModelGraph::new(layers, vec![d, 32, 32], CLASSES)
}

#[derive(Serialize)]
struct FixtureInfo<'a> {
    kind: FixtureKind,
    seed: u64,
    description: &'a str,
    target_layer: Option<usize>,
    eval_samples: usize,
    train_samples: usize,
    class_count: usize,
}

impl Fixture {
    /// Writes `model.json`, `data/`, `train/`, `config.toml` and `fixture.json`.
    /// Workload fixtures store weights in external tensor files.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let model_path = dir.join("model.json");
        match self.kind {
            FixtureKind::CnnWorkload | FixtureKind::MaskformerWorkload => {
                self.model.save_with_external_weights(&model_path)?
            }
            _ => self.model.save(&model_path)?,
        }
        self.data.save(dir.join("data"))?;
        self.train.save(dir.join("train"))?;
        let info = FixtureInfo {
            kind: self.kind,
            seed: self.seed,
            description: self.description,
            target_layer: self.target_layer,
            eval_samples: self.data.len(),
            train_samples: self.train.len(),
            class_count: self.model.class_count(),
        };
        let json = serde_json::to_string_pretty(&info).expect("fixture info serializes") + "\n";
        let p = dir.join("fixture.json");
        fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("config.toml");
        fs::write(&p, self.config_toml()).map_err(|e| Error::io(&p, e))
    }

    /// A runnable configuration for this fixture's directory.
    pub fn config_toml(&self) -> String {
        let strip = |text: String, key: &str| -> String {
            text.lines().filter(|l| !l.starts_with(key)).map(|l| format!("{l}\n")).collect()
        };
        let pc = strip(toml::to_string(&self.photocore).expect("config serializes"), "rng_seed");
        let dnf = strip(toml::to_string(&self.dnf).expect("config serializes"), "seed");
        let layer = self.target_layer.unwrap_or(0);
        let workload = matches!(self.kind, FixtureKind::CnnWorkload | FixtureKind::MaskformerWorkload);
        let tiles = if workload { "[16, 32, 64, 128, 256, 512]" } else { "[8, 16, 32, 64]" };
        format!(
            "seed = {seed}\nbatch = {batch}\n\n[model]\npath = \"model.json\"\n\n[dataset]\npath = \"data\"\ntrain_path = \"train\"\n\n\
             [photocore]\n{pc}\n[sweep]\ntile_sizes = {tiles}\ngains = [1.0, 2.0, 4.0, 8.0, 16.0]\nseeds = 4\n\n\
             [energy]\ntile_sizes = [16, 32, 64, 128, 256, 512]\ngains = [1.0, 2.0, 4.0]\n\n\
             [ablation]\nlayer = {layer}\n\n[rangeutil]\nlayer = {layer}\n\n[dnf]\n{dnf}",
            seed = self.seed,
            batch = if workload { 4 } else { 1 },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::evaluate_reference;

    #[test]
    fn kinds_parse() {
        for k in FixtureKind::ALL {
            assert_eq!(k.as_str().parse::<FixtureKind>().unwrap(), k);
        }
        assert!("bogus".parse::<FixtureKind>().is_err());
    }

    #[test]
    fn fp32_models_segment_well() {
        for k in [FixtureKind::Uniform, FixtureKind::OutlierLayer, FixtureKind::OutlierRow, FixtureKind::Saturating] {
            let f = generate(k, 3).unwrap();
            let r = evaluate_reference(&f.model, &f.data).unwrap();
            assert!(r.miou > 0.9, "{k}: {r:?}");
        }
    }

    #[test]
    fn same_seed_same_fixture() {
        let a = generate(FixtureKind::OutlierLayer, 9).unwrap();
        assert_eq!(a, generate(FixtureKind::OutlierLayer, 9).unwrap());
        assert_ne!(a.data, generate(FixtureKind::OutlierLayer, 10).unwrap().data);
    }

    #[test]
    fn write_layout() {
        let dir = tempfile::tempdir().unwrap();
        let f = generate(FixtureKind::Uniform, 1).unwrap();
        f.write(dir.path()).unwrap();
        for p in ["model.json", "data/img_0000.pcten", "train/lbl_0000.pcten", "config.toml", "fixture.json"] {
            assert!(dir.path().join(p).exists(), "{p}");
        }
        assert_eq!(ModelGraph::load(dir.path().join("model.json")).unwrap(), f.model);
        let cfg = crate::cli::RunConfig::load(dir.path().join("config.toml")).unwrap();
        assert_eq!(cfg.photocore.tile_size, 64);
        assert_eq!(cfg.model.unwrap().path, dir.path().join("model.json"));
        let f = generate(FixtureKind::OutlierLayer, 1).unwrap();
        let cfg: crate::cli::RunConfig = toml::from_str(&f.config_toml()).unwrap();
        assert_eq!(cfg.dnf.trainable_layers, Some(vec![0]));
    }
}
