//! Keyed Gaussian noise streams.
//!
//! Every `(sample, layer, tile row, tile col, vector)` key owns an independent
//! ChaCha8 stream, so draws do not depend on evaluation order or threading.

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

/// Expands a root seed into a sub-seed for a named purpose:
/// the first 8 bytes (little-endian) of `SHA-256(root_le || purpose)`.
pub fn derive_seed(root: u64, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(purpose.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Position of one tile-vector product within a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NoiseKey {
    pub layer: u32,
    pub tile_row: u32,
    pub tile_col: u32,
    pub vector: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
    sample: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        NoiseSource { seed, sample: 0 }
    }

    /// Same seed, different dataset sample.
    pub fn for_sample(self, sample: u64) -> Self {
        NoiseSource { sample, ..self }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample(&self) -> u64 {
        self.sample
    }

    pub fn stream(&self, key: NoiseKey) -> ChaCha8Rng {
        let mut s = [0u8; 32];
        s[0..8].copy_from_slice(&self.seed.to_le_bytes());
        s[8..16].copy_from_slice(&self.sample.to_le_bytes());
        s[16..20].copy_from_slice(&key.layer.to_le_bytes());
        s[20..24].copy_from_slice(&key.tile_row.to_le_bytes());
        s[24..28].copy_from_slice(&key.tile_col.to_le_bytes());
        s[28..32].copy_from_slice(&key.vector.to_le_bytes());
        ChaCha8Rng::from_seed(s)
    }

    /// `len` standard normal draws for `key`, in element order.
    pub fn normals(&self, key: NoiseKey, len: usize) -> Vec<f64> {
        let mut rng = self.stream(key);
        (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }
}
