//! Seed-derived child RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which consumer a child stream belongs to. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Init = 1,
    Train = 2,
    Eval = 3,
    Check = 4,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child RNG for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mixed = splitmix(splitmix(seed ^ splitmix(purpose as u64)) ^ index);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(purpose as u64);
    rng
}
