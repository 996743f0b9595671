//! Deterministic, splittable random-number streams for frame generation.
//!
//! Each frame owns an independent ChaCha stream keyed by the run seed and
//! selected by the frame index, so batches are bit-reproducible under any
//! parallel schedule: the draws inside a frame are sequential in its own
//! stream and no stream ever depends on how frames were scheduled across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; used to expand and derive seeds, never to drive
/// simulation draws directly.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expand a 64-bit seed into a full ChaCha key.
pub fn expand_seed(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Counter-based stream for one frame: same key for the whole batch, stream
/// id = frame index.
pub fn frame_rng(seed: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(expand_seed(seed));
    rng.set_stream(frame_index);
    rng
}

/// Derive a sub-seed from a base seed and a list of tags (branch index, run
/// index, ...); order-sensitive and collision-resistant enough for
/// independent simulation runs.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut state = seed ^ 0xA076_1D64_78BD_642F;
    let mut out = splitmix64(&mut state);
    for &tag in tags {
        state ^= tag.wrapping_mul(0xE703_7ED1_A0B4_28DB);
        out = splitmix64(&mut state);
    }
    out
}
