//! Counter-based random substreams.
//!
//! A stream is addressed by `(master, run, lane)` plus a replication index.
//! The first three words form the ChaCha key, the replication index selects
//! the ChaCha stream, so any stream can be materialized independently of the
//! order in which others are consumed. This is what makes parallel results
//! identical to sequential ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const DOMAIN: u64 = 0x7273_706e_6574_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedKey {
    pub master: u64,
    pub run: u64,
    pub lane: u64,
}

impl SeedKey {
    pub fn new(master: u64) -> Self {
        SeedKey {
            master,
            run: 0,
            lane: 0,
        }
    }

    pub fn with_run(self, run: u64) -> Self {
        SeedKey { run, ..self }
    }

    pub fn with_lane(self, lane: u64) -> Self {
        SeedKey { lane, ..self }
    }

    /// The generator for replication `replication` under this key.
    pub fn rng(&self, replication: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&self.master.to_le_bytes());
        seed[8..16].copy_from_slice(&self.run.to_le_bytes());
        seed[16..24].copy_from_slice(&self.lane.to_le_bytes());
        seed[24..32].copy_from_slice(&DOMAIN.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(replication);
        rng
    }
}
