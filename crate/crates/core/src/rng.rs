//! Per-question random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream selected by
//! `(master seed, purpose, question index)`. The master seed and purpose are
//! mixed into the 256-bit key and the question index selects the ChaCha
//! stream, so a question's draws never depend on how many other questions
//! were processed before it or on which thread processed it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Shuffle = 1,
    TieBreak = 2,
    Simulate = 3,
    Restart = 4,
    Replication = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed, e.g. one seed per replication or per label count.
pub fn derive_seed(master: u64, purpose: Purpose, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(purpose as u64)) ^ index)
}

/// The generator for one question (or one restart, one replication, ...).
pub fn stream(master: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = master ^ (purpose as u64).rotate_left(32);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
