//! Seeded random streams. Every random draw in a run comes from a stream
//! derived from the run seed, so results depend only on `(seed, parameters)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent stream `tag` of `seed`.
pub fn stream(seed: u64, tag: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Fixed stream tags, one per consumer.
pub mod tags {
    pub const DATASET: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INITIAL_POOL: u64 = 3;
    pub const SORTER_INIT: u64 = 10;
    pub const SORTER_TRAIN: u64 = 11;
    pub const SORTER_HELDOUT: u64 = 12;
    /// Per-cycle streams are `CYCLE_BASE + cycle * CYCLE_STRIDE + offset`.
    pub const CYCLE_BASE: u64 = 1_000;
    pub const CYCLE_STRIDE: u64 = 16;
    pub const TARGET_INIT: u64 = 0;
    pub const TARGET_SHUFFLE: u64 = 1;
    pub const KMEANS: u64 = 2;
    pub const ADV_INIT: u64 = 3;
    pub const ADV_NOISE: u64 = 4;
    pub const ADV_SHUFFLE: u64 = 5;
    pub const SELECT: u64 = 6;

    pub fn cycle(cycle: usize, offset: u64) -> u64 {
        CYCLE_BASE + cycle as u64 * CYCLE_STRIDE + offset
    }
}
