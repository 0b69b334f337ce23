//! Counter-based deterministic random streams.
//!
//! Every consumer of randomness derives its own stream from a user seed plus a
//! list of integer tags (row index, chunk index, trial index, ...). Streams for
//! distinct tag tuples are statistically independent, and results do not depend
//! on the order in which streams are consumed, so parallel code reproduces the
//! sequential output bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; used only to expand seeds into stream keys.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent RNG stream from `seed` and `tags`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908;
    let mut key = [0u8; 32];
    for tag in tags {
        state ^= tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        state = splitmix64(&mut state);
    }
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
