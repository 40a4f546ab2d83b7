use serde::{Deserialize, Serialize};

use crate::abfp::QuantParams;
use crate::error::{Error, Result};

/// Which quantization stage(s) to disable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bypass {
    #[default]
    None,
    InputQ,
    WeightQ,
    OutputQ,
    All,
}

impl Bypass {
    pub fn quantize_input(self) -> bool {
        !matches!(self, Bypass::InputQ | Bypass::All)
    }

    pub fn quantize_weight(self) -> bool {
        !matches!(self, Bypass::WeightQ | Bypass::All)
    }

    pub fn quantize_output(self) -> bool {
        !matches!(self, Bypass::OutputQ | Bypass::All)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Bypass::None => "none",
            Bypass::InputQ => "input_q",
            Bypass::WeightQ => "weight_q",
            Bypass::OutputQ => "output_q",
            Bypass::All => "all",
        }
    }
}

/// How DAC scales are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// One scale per weight row segment and per input vector segment.
    #[default]
    Abfp,
    /// One scale for the whole weight matrix and one for the whole input.
    PerTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhotocoreConfig {
    pub tile_size: usize,
    pub input_bits: u32,
    pub weight_bits: u32,
    pub output_bits: u32,
    pub gain: f64,
    /// Noise std in pre-ADC output counts. When absent, `noise_adc_steps`
    /// output-ADC steps are used instead.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    pub noise_adc_steps: f64,
    pub rng_seed: u64,
    pub bypass: Bypass,
    pub scale_mode: ScaleMode,
}

impl Default for PhotocoreConfig {
    fn default() -> Self {
        PhotocoreConfig {
            tile_size: 64,
            input_bits: 10,
            weight_bits: 7,
            output_bits: 11,
            gain: 4.0,
            noise_sigma: None,
            noise_adc_steps: 0.05,
            rng_seed: 0,
            bypass: Bypass::None,
            scale_mode: ScaleMode::Abfp,
        }
    }
}

impl PhotocoreConfig {
    /// Noise-free, fully bypassed pipeline.
    pub fn ideal(tile_size: usize) -> Self {
        PhotocoreConfig {
            tile_size,
            gain: 1.0,
            noise_sigma: Some(0.0),
            bypass: Bypass::All,
            ..Default::default()
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.noise_sigma = Some(sigma);
        self
    }

    pub fn with_bypass(mut self, bypass: Bypass) -> Self {
        self.bypass = bypass;
        self
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let n = self.tile_size;
        if n == 0 {
            return Err(Error::Config("tile_size must be at least 1".into()));
        }
        let input = QuantParams::new(self.input_bits)?;
        let weight = QuantParams::new(self.weight_bits)?;
        let output = QuantParams::new(self.output_bits)?;
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::Config(format!("gain must be positive, got {}", self.gain)));
        }
        let full_scale = n as f64 * input.delta() as f64 * weight.delta() as f64;
        if full_scale > 2f64.powi(31) {
            return Err(Error::Config(format!(
                "n * delta_x * delta_w = {full_scale} exceeds 2^31"
            )));
        }
        let adc_step = full_scale / output.delta() as f64;
        let sigma = match self.noise_sigma {
            Some(s) => s,
            None => self.noise_adc_steps * adc_step,
        };
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be non-negative, got {sigma}")));
        }
        Ok(Resolved {
            n,
            input,
            weight,
            output,
            gain: self.gain,
            sigma,
            full_scale,
            bypass: self.bypass,
            scale_mode: self.scale_mode,
        })
    }
}

/// A validated configuration with derived constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub n: usize,
    pub input: QuantParams,
    pub weight: QuantParams,
    pub output: QuantParams,
    pub gain: f64,
    /// Noise std in pre-ADC counts.
    pub sigma: f64,
    /// `n * delta_x * delta_w`.
    pub full_scale: f64,
    pub bypass: Bypass,
    pub scale_mode: ScaleMode,
}

impl Resolved {
    /// Width of one output-ADC level in pre-ADC counts.
    pub fn adc_step(&self) -> f64 {
        self.full_scale / self.output.delta() as f64
    }

    /// Noise std expressed in output units for the given row/vector scales.
    pub fn dequantized_sigma(&self, sw: f64, sx: f64) -> f64 {
        self.sigma * sw * sx / (self.gain * self.input.delta() as f64 * self.weight.delta() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let r = PhotocoreConfig::default().resolve().unwrap();
        assert_eq!((r.input.delta(), r.weight.delta(), r.output.delta()), (511, 63, 1023));
        assert_eq!(r.full_scale, 64.0 * 511.0 * 63.0);
        assert!((r.sigma - 0.05 * r.adc_step()).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid() {
        let bad = [
            PhotocoreConfig { tile_size: 0, ..Default::default() },
            PhotocoreConfig { input_bits: 1, ..Default::default() },
            PhotocoreConfig { gain: 0.0, ..Default::default() },
            PhotocoreConfig { gain: f64::NAN, ..Default::default() },
            PhotocoreConfig::default().with_sigma(-1.0),
            PhotocoreConfig { tile_size: 1 << 20, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.resolve(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn bypass_flags() {
        assert!(Bypass::None.quantize_input() && Bypass::None.quantize_output());
        assert!(!Bypass::InputQ.quantize_input() && Bypass::InputQ.quantize_weight());
        assert!(!Bypass::All.quantize_weight() && !Bypass::All.quantize_output());
    }

    #[test]
    fn toml_round_trip() {
        let c: PhotocoreConfig =
            toml::from_str("tile_size = 8\nbypass = \"output_q\"\nscale_mode = \"per_tensor\"").unwrap();
        assert_eq!(c.tile_size, 8);
        assert_eq!(c.bypass, Bypass::OutputQ);
        assert_eq!(c.scale_mode, ScaleMode::PerTensor);
        assert!(toml::from_str::<PhotocoreConfig>("bogus = 1").is_err());
    }
}
