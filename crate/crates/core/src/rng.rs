//! Reproducible random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream addressed by
//! `(master seed, path)`, where the path names the work item (a domain tag
//! followed by replicate, draw, attempt, ... counters). The 256-bit key is
//! expanded from the master seed with SplitMix64 and the 64-bit ChaCha
//! stream id is a SplitMix64 fold of the path. A work item therefore sees
//! the same numbers whichever thread runs it and in whatever order, which
//! is what makes parallel results independent of the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags for the first element of a stream path.
pub mod domain {
    pub const ADJACENCY: u64 = 1;
    pub const SAMPLES: u64 = 2;
    pub const GAUSSIAN_DRAWS: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const REPLICATE: u64 = 5;
    pub const WISHART: u64 = 6;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a path of counters into a single 64-bit value.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = master ^ 0x6A09_E667_F3BC_C908;
    let mut acc = splitmix64(&mut state);
    for &step in path {
        state ^= step.wrapping_mul(0xD6E8_FEB8_6659_FD93).wrapping_add(acc);
        acc = splitmix64(&mut state);
    }
    acc
}

/// The ChaCha8 stream for `(master, path)`.
pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = master;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(derive_seed(master, path));
    rng
}
