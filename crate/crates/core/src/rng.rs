//! Counter-based random substreams.
//!
//! Every replicate draws from its own ChaCha8 stream addressed by
//! `(seed, domain, index)`, so a replicate's randomness does not depend on
//! which thread runs it or in which order replicates are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. One per consumer of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    EmpiricalBoot = 1,
    MultiplierBoot = 2,
    ResidualBoot = 3,
    Subsampling = 4,
    ReweightBoot = 5,
    SimData = 6,
    SimReplicate = 7,
}

/// Words reserved per replicate inside a stream (2^32 32-bit words).
const WORDS_PER_INDEX: u32 = 32;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Returns the generator for replicate `index` of `domain` under `seed`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(domain as u64);
    rng.set_word_pos(u128::from(index) << WORDS_PER_INDEX);
    rng
}

/// Derives an independent child seed, e.g. one per simulation repetition.
pub fn child_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    let mut state = seed ^ (domain as u64).rotate_left(32) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    splitmix64(&mut state)
}
