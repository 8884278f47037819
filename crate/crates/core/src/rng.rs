//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream_id)`; draws in
//! one stream never depend on how many other streams exist or in which
//! order they are consumed, so replications can run in parallel and still
//! reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream ids for nested experiment coordinates (e.g. `(population, rep)`).
pub fn stream_id(parts: &[u64]) -> u64 {
    // FNV-1a over the little-endian words.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}
