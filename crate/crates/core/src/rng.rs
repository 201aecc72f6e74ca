//! Per-trajectory random streams.
//!
//! Every trajectory owns a ChaCha8 stream keyed by the master seed and
//! addressed by `(cell, trajectory)`, so results do not depend on how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed {
    pub master: u64,
    pub cell: u32,
    pub trajectory: u32,
}

impl StreamSeed {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            cell: 0,
            trajectory: 0,
        }
    }

    pub fn at(master: u64, cell: u32, trajectory: u32) -> Self {
        Self {
            master,
            cell,
            trajectory,
        }
    }

    pub fn stream_id(&self) -> u64 {
        (u64::from(self.cell) << 32) | u64::from(self.trajectory)
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream_id());
        rng
    }
}
