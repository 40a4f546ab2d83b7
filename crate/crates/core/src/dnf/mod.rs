//! Differential noise fine-tuning: fit per-layer error distributions of the
//! simulated array, then train the float model with that noise injected.

mod profile;
mod train;

pub use profile::{estimate_noise_profile, LayerNoise, NoiseProfile, MIN_SAMPLES, PROFILE_VERSION};
pub use train::{dnf_train, fine_tune, Network, NoiseInjector, TrainConfig, TrainOutcome};
