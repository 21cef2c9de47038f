//! Counter-based RNG streams.
//!
//! Every random draw in the simulator comes from a ChaCha stream keyed by
//! `(seed, drop, trial, purpose)`, so results never depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Geometry = 1,
    Shadowing = 2,
    Pilots = 3,
    Channels = 4,
    SmallCell = 5,
    Bootstrap = 6,
}

pub fn stream(seed: u64, drop: u64, trial: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&drop.to_le_bytes());
    key[16..24].copy_from_slice(&trial.to_le_bytes());
    key[24..].copy_from_slice(&(purpose as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
