//! Deterministic stream derivation from a single master seed.
//!
//! Every random consumer (a learner, an evaluator, a rollout worker) gets its
//! own stream named by a tag path, so adding or removing one consumer never
//! perturbs the draws seen by another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; good avalanche for combining tag words.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A seed from which independent named streams can be split off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSeed(u64);

impl StreamSeed {
    pub fn new(master: u64) -> Self {
        StreamSeed(master)
    }

    /// Derive a child seed by folding in one tag word.
    pub fn child(self, tag: u64) -> Self {
        StreamSeed(mix(self.0 ^ mix(tag)))
    }

    /// Derive a child seed from a string label.
    pub fn labeled(self, label: &str) -> Self {
        let mut s = self;
        for chunk in label.as_bytes().chunks(8) {
            let mut w = [0u8; 8];
            w[..chunk.len()].copy_from_slice(chunk);
            s = s.child(u64::from_le_bytes(w));
        }
        s.child(label.len() as u64)
    }

    /// Materialize the stream as an RNG.
    pub fn rng(self) -> ChaCha12Rng {
        let mut seed = [0u8; 32];
        let mut z = self.0;
        for word in seed.chunks_mut(8) {
            z = mix(z);
            word.copy_from_slice(&z.to_le_bytes());
        }
        ChaCha12Rng::from_seed(seed)
    }
}
