// SPDX-License-Identifier: Apache-2.0

//! Seeded random streams.
//!
//! Every stochastic stage draws from its own ChaCha stream, keyed by the
//! global seed, an entity index (device, trial) and a stage tag, so runs are
//! reproducible and independent of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Stage {
    Fabric = 1,
    Characterize = 2,
    Selection = 3,
    Groups = 4,
    Placement = 5,
    Response = 6,
    Trial = 7,
}

/// A fresh generator from a bare seed.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for `(seed, index, stage)`.
pub fn stream(seed: u64, index: u64, stage: Stage) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << 8) | stage as u64);
    rng
}

/// Derives a child seed without consuming an existing generator.
pub fn derive_seed(seed: u64, index: u64, stage: Stage) -> u64 {
    use rand::RngCore;
    stream(seed, index, stage).next_u64()
}
