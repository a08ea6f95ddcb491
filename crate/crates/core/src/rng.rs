//! Seed plumbing.
//!
//! Every random quantity in a run comes from a ChaCha8 generator keyed by the
//! run seed and a distinct stream id, so the gradient clock, the gossip clock,
//! the location draws and the mini-batch draws are mutually independent and
//! individually replayable.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent sub-streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    GradientClock = 1,
    GossipClock = 2,
    GradientLocation = 3,
    GossipLocation = 4,
    MiniBatch = 5,
    Graph = 6,
    Data = 7,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
