//! Seeded random streams.
//!
//! Every stochastic stage derives one independent ChaCha stream per item
//! from `(seed, item index)`, so results never depend on how work is split
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

/// Stream for item `index` of a run seeded with `seed`.
pub fn item_rng(seed: u64, index: u64) -> StageRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stream for sequential (single state machine) stages.
pub fn stage_rng(seed: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(seed)
}
