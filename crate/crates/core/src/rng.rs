//! Seeded random streams.
//!
//! Every random decision in the crate draws from a [`ChaCha8Rng`] keyed by the
//! user seed, with a distinct ChaCha stream id per consumer. Two consumers
//! never share a stream, so adding draws in one place does not shift another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Well-known stream ids. Per-item streams are offset from these bases.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const SYNTH: u64 = 4;
    pub const VALID: u64 = 5;
    pub const FEATURIZE: u64 = 6;
    pub const EXAMPLE_BASE: u64 = 1 << 32;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream for a per-epoch, per-item consumer such as example augmentation.
pub fn item_stream(base: u64, epoch: u64, index: u64) -> u64 {
    base.wrapping_add(epoch.wrapping_mul(1 << 24)).wrapping_add(index)
}
