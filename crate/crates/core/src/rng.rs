//! Deterministic random sub-streams.
//!
//! Every consumer of randomness (assignment, Alice's symbols, detector noise,
//! attack draws) owns a ChaCha8 stream keyed by the run seed and a
//! [`StreamId`] packing `(kind, quadrature, group)`. Groups can then be
//! simulated in any order, or in parallel, with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::params::Quadrature;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamKind {
    Assign = 1,
    Alice = 2,
    Noise = 3,
    Attack = 4,
    /// Free for callers outside the block simulator (tests, sweeps).
    User = 15,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId(u64);

impl StreamId {
    pub fn new(kind: StreamKind, quadrature: Quadrature, group: u32) -> Self {
        StreamId(((kind as u64) << 56) | ((quadrature.index() as u64) << 48) | group as u64)
    }

    pub fn user(n: u64) -> Self {
        StreamId(((StreamKind::User as u64) << 56) | (n & ((1 << 56) - 1)))
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

pub fn stream(seed: u64, id: StreamId) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.raw());
    rng
}
