//! Deterministic, index-addressable random streams.
//!
//! Every stream is a ChaCha20 generator whose 256-bit key is derived from the
//! user seed and a tuple of indices (chain, round, rank) through SplitMix64.
//! Two streams with different index tuples are statistically independent, and
//! the full generator state fits in [`STATE_BYTES`] bytes for restart files.

use rand::distr::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Size of a serialized [`StreamRng`]: 32-byte key, 8-byte stream id and the
/// 16-byte word position.
pub const STATE_BYTES: usize = 56;

/// Source of the two variate kinds the sampler consumes.
pub trait Variates {
    fn standard_normal(&mut self) -> f64;
    /// Uniform on the open interval (0, 1).
    fn open01(&mut self) -> f64;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 256-bit key from a seed and an index path.
pub fn derive_key(seed: u64, path: &[u64]) -> [u8; 32] {
    let mut state = seed;
    // absorb the path length first so (a) and (a, 0) differ
    let mut acc = splitmix64(&mut state) ^ (path.len() as u64);
    for &p in path {
        state ^= acc;
        state = state.wrapping_add(p.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        acc = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state ^= acc;
        acc = splitmix64(&mut state);
        chunk.copy_from_slice(&acc.to_le_bytes());
    }
    key
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamRng {
    inner: ChaCha20Rng,
}

impl StreamRng {
    pub fn from_key(key: [u8; 32]) -> Self {
        Self { inner: ChaCha20Rng::from_seed(key) }
    }

    /// Continuous stream of chain `chain` (serial runs use chain 0).
    pub fn for_chain(seed: u64, chain: u64) -> Self {
        Self::from_key(derive_key(seed, &[0, chain]))
    }

    /// One-shot stream for worker `rank` in round `round`.
    pub fn for_round(seed: u64, chain: u64, round: u64, rank: u32) -> Self {
        Self::from_key(derive_key(seed, &[1, chain, round, u64::from(rank)]))
    }

    pub fn to_bytes(&self) -> [u8; STATE_BYTES] {
        let mut out = [0u8; STATE_BYTES];
        out[..32].copy_from_slice(&self.inner.get_seed());
        out[32..40].copy_from_slice(&self.inner.get_stream().to_le_bytes());
        out[40..].copy_from_slice(&self.inner.get_word_pos().to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != STATE_BYTES {
            return Err(Error::Decode("rng state length"));
        }
        let mut key = [0u8; 32];
        key.copy_from_slice(&bytes[..32]);
        let mut inner = ChaCha20Rng::from_seed(key);
        let mut stream = [0u8; 8];
        stream.copy_from_slice(&bytes[32..40]);
        let mut pos = [0u8; 16];
        pos.copy_from_slice(&bytes[40..]);
        inner.set_stream(u64::from_le_bytes(stream));
        inner.set_word_pos(u128::from_le_bytes(pos));
        Ok(Self { inner })
    }
}

impl Variates for StreamRng {
    #[inline]
    fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    #[inline]
    fn open01(&mut self) -> f64 {
        Open01.sample(&mut self.inner)
    }
}
