//! Seeded randomness. Every sampling operation takes an explicit 64-bit
//! seed so runs are reproducible byte-for-byte; independent streams are
//! derived by mixing a stream id into the seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// splitmix64 finalizer; decorrelates consecutive stream ids.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for an independent sub-stream.
pub fn derive(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream))
}

/// RNG for a derived sub-stream.
pub fn stream(seed: u64, stream_id: u64) -> Rng {
    Rng::seed_from_u64(derive(seed, stream_id))
}

/// Stateless hash of lattice coordinates, used by procedural textures.
pub fn hash2(x: i64, y: i64, seed: u64) -> u64 {
    mix(seed ^ mix(x as u64).wrapping_add(mix((y as u64).wrapping_mul(0x9e37_79b9))))
}

/// Map a hash to [0, 1).
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}
