//! Seeded counter-based random streams.
//!
//! Every randomized computation derives its generator from a 64-bit seed and
//! a stream index, so trial `i` sees the same numbers whatever thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type LabRng = ChaCha20Rng;

/// Generator for stream `stream` under `seed`.
pub fn substream(seed: u64, stream: u64) -> LabRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive an independent child seed, e.g. for one run inside a sweep.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
