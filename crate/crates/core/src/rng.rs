//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed (expanded with
//! `SeedableRng::seed_from_u64`) and positioned on a 64-bit stream id via
//! ChaCha's native stream counter. Identical `(seed, stream)` pairs yield
//! identical sequences on every platform and under any thread schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Stream for replication `rep`, sample-size group `group` and sub-stream
    /// `sub` of an experiment. Layout: `rep << 24 | group << 8 | sub`.
    pub fn for_replication(seed: u64, rep: u64, group: u16, sub: u8) -> Self {
        debug_assert!(rep < (1 << 40));
        Self::new(seed, (rep << 24) | ((group as u64) << 8) | sub as u64)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}
