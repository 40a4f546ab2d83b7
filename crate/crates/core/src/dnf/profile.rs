use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::noise::NoiseSource;
use crate::photocore::{photocore_layer, run_parallel, PhotocoreConfig};
use crate::reference::reference_trace;

pub const PROFILE_VERSION: u32 = 1;

/// Default minimum number of difference samples per layer.
pub const MIN_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerNoise {
    pub layer_index: usize,
    pub mean: f64,
    pub std: f64,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseProfile {
    pub pcnoise_version: u32,
    pub seed: u64,
    pub layers: Vec<LayerNoise>,
}

impl NoiseProfile {
    /// A profile that injects nothing at the given layers.
    pub fn zero(layers: &[usize]) -> Self {
        NoiseProfile {
            pcnoise_version: PROFILE_VERSION,
            seed: 0,
            layers: layers
                .iter()
                .map(|&layer_index| LayerNoise { layer_index, mean: 0.0, std: 0.0, sample_count: 0 })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: NoiseProfile =
            serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pcnoise_version != PROFILE_VERSION {
            return Err(Error::Config(format!(
                "unsupported pcnoise_version {} (expected {PROFILE_VERSION})",
                self.pcnoise_version
            )));
        }
        for l in &self.layers {
            if !(l.std >= 0.0 && l.std.is_finite() && l.mean.is_finite()) {
                return Err(Error::Config(format!("layer {}: invalid noise parameters", l.layer_index)));
            }
        }
        Ok(())
    }
}

/// Fits a Gaussian to `simulated - fp32` at the output of every layer
/// declared on the photocore, running that layer alone on the array.
pub fn estimate_noise_profile(
    model: &ModelGraph,
    calibration: &Dataset,
    cfg: &PhotocoreConfig,
    min_samples: usize,
) -> Result<NoiseProfile> {
    if calibration.is_empty() {
        return Err(Error::InsufficientSamples { layer: 0, needed: min_samples, got: 0 });
    }
    let resolved = cfg.resolve()?;
    let targets = model.photocore_layers();
    let per_sample: Vec<Vec<Vec<f64>>> = run_parallel(|| {
        calibration
            .samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let trace = reference_trace(model, &s.image)?;
                let noise = NoiseSource::new(cfg.rng_seed).for_sample(i as u64);
                targets
                    .iter()
                    .map(|&l| {
                        let input = if l == 0 { &s.image } else { &trace[l - 1] };
                        let sim = photocore_layer(&model.layers()[l], l, input, &resolved, &noise)?;
                        Ok(sim.data().iter().zip(trace[l].data()).map(|(a, b)| *a as f64 - *b as f64).collect())
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut layers = Vec::with_capacity(targets.len());
    for (t, &layer_index) in targets.iter().enumerate() {
        let diffs = per_sample.iter().flat_map(|s| s[t].iter().copied());
        let count = per_sample.iter().map(|s| s[t].len()).sum::<usize>();
        if count < min_samples.max(1) {
            return Err(Error::InsufficientSamples { layer: layer_index, needed: min_samples, got: count });
        }
        let mean = diffs.clone().sum::<f64>() / count as f64;
        let var = diffs.map(|d| (d - mean).powi(2)).sum::<f64>() / count as f64;
        let std = var.sqrt();
        if mean.abs() > std {
            log::warn!("layer {layer_index}: noise mean {mean} exceeds std {std}, outputs may be saturating");
        }
        layers.push(LayerNoise { layer_index, mean, std, sample_count: count });
    }
    Ok(NoiseProfile { pcnoise_version: PROFILE_VERSION, seed: cfg.rng_seed, layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabelMask, SegmentationSample};
    use crate::model::{Domain, Layer};
    use crate::photocore::Bypass;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};

    fn identity_model(c: usize) -> ModelGraph {
        let mut w = vec![0.0; c * c];
        for i in 0..c {
            w[i * c + i] = 1.0;
        }
        let w = Tensor::new(vec![c, c], w).unwrap();
        ModelGraph::new(vec![Layer::dense(w, Domain::Photocore)], vec![c, 8, 8], c).unwrap()
    }

    fn data(c: usize, count: usize) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        Dataset::new(
            (0..count)
                .map(|_| SegmentationSample {
                    image: Tensor::new(vec![c, 8, 8], (0..c * 64).map(|_| rng.random_range(-1.0..1.0)).collect())
                        .unwrap(),
                    label: LabelMask::new(8, 8, vec![0; 64]).unwrap(),
                })
                .collect(),
        )
    }

    #[test]
    fn bypass_gives_near_zero_noise() {
        let m = identity_model(8);
        let p = estimate_noise_profile(&m, &data(8, 2), &PhotocoreConfig::ideal(8), 100).unwrap();
        assert_eq!(p.layers.len(), 1);
        assert!(p.layers[0].std < 1e-2, "{:?}", p.layers[0]);
    }

    #[test]
    fn identity_layer_matches_uniform_quantization_noise() {
        let n = 32;
        let m = identity_model(n);
        let ds = data(n, 8);
        let cfg = PhotocoreConfig { tile_size: n, gain: 1.0, bypass: Bypass::None, ..Default::default() }
            .with_sigma(0.0);
        let p = estimate_noise_profile(&m, &ds, &cfg, 10_000).unwrap();
        // Weight rows of the identity quantize exactly; the input error is far
        // below the output step, so the output ADC dominates.
        let mut var = 0.0;
        let mut count = 0usize;
        for s in &ds.samples {
            for pix in 0..64 {
                let sx = crate::abfp::vector_scale(&(0..n).map(|c| s.image.data()[c * 64 + pix]).collect::<Vec<_>>());
                let step = n as f64 * sx as f64 / 1023.0;
                var += n as f64 * step * step / 12.0;
                count += n;
            }
        }
        let analytic = (var / count as f64).sqrt();
        let got = p.layers[0].std;
        assert!((got - analytic).abs() <= 0.2 * analytic, "{got} vs {analytic}");
    }

    #[test]
    fn too_few_samples() {
        let m = identity_model(4);
        let r = estimate_noise_profile(&m, &data(4, 1), &PhotocoreConfig::ideal(4), 10_000);
        assert!(matches!(r, Err(Error::InsufficientSamples { got: 256, .. })));
        assert!(estimate_noise_profile(&m, &Dataset::default(), &PhotocoreConfig::ideal(4), 1).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = identity_model(4);
        let p = estimate_noise_profile(&m, &data(4, 2), &PhotocoreConfig { tile_size: 4, ..Default::default() }, 1)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        p.save(&path).unwrap();
        assert_eq!(NoiseProfile::load(&path).unwrap(), p);
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(v["pcnoise_version"], 1);
        assert!(v["layers"][0]["std"].is_number());
    }
}
