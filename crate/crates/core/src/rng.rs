//! Seed derivation for reproducible, independent random streams.
//!
//! Every stream in the crate is keyed by `(master seed, purpose tag, index)`
//! and passed through a SplitMix64 finalizer. Per-site environment values use
//! the same mixer keyed by the site's lattice coordinates, so a site's rate
//! can be recomputed anywhere without generating its neighbours first.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// PRNG used by all simulations.
pub type SimRng = Xoshiro256PlusPlus;

/// Purpose tags for stream derivation.
pub mod tag {
    pub const ENVIRONMENT: u64 = 0x454e_5649;
    pub const DYNAMICS: u64 = 0x4459_4e41;
    pub const INITIAL: u64 = 0x494e_4954;
    pub const LABELS: u64 = 0x4c41_4245;
    pub const WALKS: u64 = 0x5741_4c4b;
    pub const REPLICA: u64 = 0x5245_504c;
}

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed; distinct `(tag, index)` pairs give unrelated seeds.
#[inline]
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(mix64(master) ^ tag) ^ index)
}

pub fn stream(master: u64, tag: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tag, index))
}

/// Keyed hash of lattice coordinates.
pub fn site_key(seed: u64, coords: &[i64]) -> u64 {
    let mut h = mix64(seed ^ tag::ENVIRONMENT);
    for &c in coords {
        h = mix64(h ^ c as u64);
    }
    h
}

/// Uniform in the open interval (0, 1) from 52 random bits.
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}
