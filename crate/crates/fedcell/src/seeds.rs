//! Counter-based derivation of independent RNG streams from one master seed.
//!
//! Each consumer gets its own ChaCha stream keyed by (domain, round, user),
//! so participant sampling never perturbs SGD shuffling, and per-client
//! training streams are identical whether clients run sequentially or in
//! parallel.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    WeightInit = 1,
    SyntheticData = 2,
    Partition = 3,
    Sampling = 4,
    LocalTraining = 5,
}

#[derive(Debug, Clone, Copy)]
pub struct SeedPlan {
    master: u64,
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stream layout: domain in the top byte, round in the next 24 bits,
    /// user id in the low 32 bits.
    pub fn stream(&self, domain: StreamDomain, round: usize, user: usize) -> ChaCha8Rng {
        let id = ((domain as u64) << 56)
            | (((round as u64) & 0x00ff_ffff) << 32)
            | ((user as u64) & 0xffff_ffff);
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(id);
        rng
    }
}
