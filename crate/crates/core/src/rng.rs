//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a 64-bit seed, and independent jobs (folds, replicates, epochs)
//! derive their seeds from `(base, stream, index)` so that results do not
//! depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named sub-streams so that, e.g., the split shuffle and the epoch order
/// never share a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Split,
    Validation,
    Epoch,
    Dropout,
    Fold,
    Replicate,
    Exposure,
    Marginals,
    Permutation,
    Dataset,
}

pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    let tag = stream as u64 + 1;
    splitmix64(splitmix64(base ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ index)
}
