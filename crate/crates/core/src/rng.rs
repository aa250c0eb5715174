//! Deterministic random substreams.
//!
//! Every walk draws from its own ChaCha stream keyed by `(seed, iteration,
//! sample index)`, so results do not depend on how samples are scheduled
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key for the generator shared by all samples of one iteration.
pub fn iteration_key(seed: u64, iteration: u64) -> u64 {
    mix(mix(seed) ^ iteration.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Generator for sample `index` of `iteration`.
pub fn substream(seed: u64, iteration: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(iteration_key(seed, iteration));
    rng.set_stream(index);
    rng
}
