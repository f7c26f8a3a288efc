//! Counter-based random streams keyed by `(master_seed, image_index, level_index)`.
//!
//! Generator: ChaCha8 keystream. The 256-bit key is the little-endian
//! concatenation of `master_seed`, `image_index`, `level_index` and the
//! ASCII tag `NOISEBN1`; the nonce/stream id is 0. Each draw therefore depends
//! only on the key and its position in the keystream, so any (image, level)
//! cell can be generated on any thread in any order.
//!
//! Uniform reals take the top 53 bits of a 64-bit word: `u = (w >> 11) * 2^-53`,
//! giving `u` in `[0, 1)`. Standard normals use the Box-Muller transform on a
//! pair of uniforms `(u1, u2)`: `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` and the
//! matching `sin` term, returned in that order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const DOMAIN_TAG: &[u8; 8] = b"NOISEBN1";

#[derive(Debug, Clone)]
pub struct RandomStream {
    master_seed: u64,
    image_index: u64,
    level_index: u64,
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

/// Derives the stream for one image at one noise level.
pub fn derive_stream(master_seed: u64, image_index: u64, level_index: u64) -> RandomStream {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&image_index.to_le_bytes());
    key[16..24].copy_from_slice(&level_index.to_le_bytes());
    key[24..32].copy_from_slice(DOMAIN_TAG);
    RandomStream {
        master_seed,
        image_index,
        level_index,
        rng: ChaCha8Rng::from_seed(key),
        spare_normal: None,
    }
}

impl RandomStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn image_index(&self) -> u64 {
        self.image_index
    }

    pub fn level_index(&self) -> u64 {
        self.level_index
    }

    /// Uniform real in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate (Box-Muller, pairs cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
