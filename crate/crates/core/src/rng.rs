//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! master seed and addressed by a purpose-specific stream id, so independent
//! consumers (data generation, initialization, dropout masks, shuffling) never
//! share a sequence. ChaCha is counter based: reproducing a sequence in
//! another language only requires the (seed, stream) pair.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers, one per purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Dropout = 3,
    Shuffle = 4,
    Split = 5,
    MonteCarlo = 6,
    Solver = 7,
    Trial = 8,
}

/// Generator for `(seed, stream)`; `index` derives sub-seeds for the
/// `index`-th independent item (trial, run, grid point).
pub fn stream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, index));
    rng.set_stream(stream as u64);
    rng
}

/// Derive a child seed for the `index`-th work item (splitmix64 finalizer).
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
