//! Deterministic random substreams.
//!
//! Every unit of Monte Carlo work draws from its own generator whose seed is a
//! stable hash of the master seed and the unit's coordinates, so results do
//! not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all simulation work.
pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a master seed and a coordinate path into a 64-bit stream id.
pub fn stream_id(master_seed: u64, coords: &[u64]) -> u64 {
    let mut h = mix64(master_seed ^ 0x6A09_E667_F3BC_C908);
    for (i, &c) in coords.iter().enumerate() {
        let salt = GOLDEN_GAMMA.wrapping_mul(i as u64 + 1);
        h = mix64(h ^ mix64(c.wrapping_add(salt)));
    }
    h
}

/// Build a generator for the given coordinates.
pub fn substream(master_seed: u64, coords: &[u64]) -> SimRng {
    let id = stream_id(master_seed, coords);
    let mut seed = [0u8; 32];
    let mut state = id;
    for chunk in seed.chunks_exact_mut(8) {
        state = state.wrapping_add(GOLDEN_GAMMA);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    SimRng::from_seed(seed)
}
