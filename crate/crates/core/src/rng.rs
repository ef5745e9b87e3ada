//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream selected by a
//! `(seed, domain, index)` triple. ChaCha is counter based, so a stream is a
//! pure function of its key and the draws for sample `k` never depend on how
//! many other samples were drawn first or on which thread drew them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates independent consumers of the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Perturbation = 1,
    ObstacleForecast = 2,
    Plant = 3,
    StaticMap = 4,
    StartGoal = 5,
    DynamicField = 6,
    Scenario = 7,
}

/// Open the stream for `index` under `(seed, domain)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Mix a parent seed with a counter into a new seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, counter: u64) -> u64 {
    let mut z = seed ^ counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
