//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] obtained from a
//! [`SeedSpec`]. A spec is a 64-bit key; [`SeedSpec::child`] derives a new key
//! for a nested scope (a condition, a `k`, a replicate, ...) and
//! [`SeedSpec::stream`] opens the ChaCha stream for a `(purpose, index)` pair.
//! Streams never depend on the order in which they are opened, so results do
//! not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for. The discriminant is mixed into the key so two
/// purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Data = 1,
    TestPoints = 2,
    Partition = 3,
    Resample = 4,
    Labels = 5,
    Offset = 6,
    Oracle = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Key for a nested scope identified by `tag`.
    pub fn child(self, tag: u64) -> Self {
        Self {
            master_seed: splitmix64(splitmix64(self.master_seed) ^ tag.wrapping_mul(GOLDEN)),
        }
    }

    /// Independent stream for `(purpose, index)` under this key.
    pub fn stream(self, purpose: Purpose, index: u64) -> ChaCha8Rng {
        let key = self.child(purpose as u64).master_seed;
        let mut seed = [0u8; 32];
        let mut state = key;
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(index);
        rng
    }
}

impl Default for SeedSpec {
    fn default() -> Self {
        Self::new(20_160_901)
    }
}
