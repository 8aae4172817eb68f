//! Hierarchical seeding.
//!
//! Every random draw in a run is keyed by a path of indices below the master
//! seed, e.g. `(master, replicate, step, member)`. A child stream depends only
//! on its parent and its own index, so the draws for one member never change
//! when other members, replicates or threads are added or reordered.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for all library streams.
pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream(splitmix64(seed))
    }

    /// Derives the stream for child `index`.
    pub fn child(&self, index: u64) -> Self {
        SeedStream(splitmix64(self.0 ^ splitmix64(index.wrapping_add(GOLDEN))))
    }

    /// Shorthand for a chain of [`child`](Self::child) calls.
    pub fn path(&self, indices: &[u64]) -> Self {
        indices.iter().fold(*self, |s, &i| s.child(i))
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::seed_from_u64(self.0)
    }

    pub fn raw(&self) -> u64 {
        self.0
    }
}
