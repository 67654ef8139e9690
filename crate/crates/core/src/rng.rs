//! Counter-addressed random streams.
//!
//! Every draw is addressed by `(seed, stream_id, block, position)`. Work that
//! is split across threads asks for a block-specific generator, so the values
//! never depend on which thread ran which block or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of ChaCha words reserved per block (2^36). No block comes close to
/// consuming this many, so blocks never overlap.
const BLOCK_WORDS: u128 = 1 << 36;

/// Points generated per block by [`RngSpec::par_blocks`].
pub const BLOCK_LEN: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSpec {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A derived stream, e.g. one per restart or one per dataset role.
    /// Distinct labels give distinct streams.
    pub fn child(&self, label: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(label.wrapping_add(1))),
        }
    }

    /// Generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        self.block_rng(0)
    }

    /// Generator positioned at the start of block `block` of this stream.
    pub fn block_rng(&self, block: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos(block as u128 * BLOCK_WORDS);
        rng
    }

    /// Fill `n` items in blocks of [`BLOCK_LEN`], in parallel. Block `b`
    /// always sees `block_rng(b)`.
    pub fn par_blocks<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
    {
        let blocks = n.div_ceil(BLOCK_LEN);
        let chunks: Vec<Vec<T>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = self.block_rng(b as u64);
                let start = b * BLOCK_LEN;
                let end = (start + BLOCK_LEN).min(n);
                (start..end).map(|i| f(&mut rng, i)).collect()
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        for c in chunks {
            out.extend(c);
        }
        out
    }
}
