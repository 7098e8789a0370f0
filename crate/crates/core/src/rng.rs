//! Reproducible random streams.
//!
//! Every replicate owns a ChaCha stream addressed by `(seed, stream_id, role)`;
//! ChaCha is counter based, so streams never overlap and replicates can be run
//! in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// What a stream is used for inside one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamRole {
    Signal = 0,
    ObservationNoise = 1,
    Bridge = 2,
    Auxiliary = 3,
}

const ROLES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngConfig {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngConfig {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngConfig { seed, stream_id }
    }

    /// Configuration of replicate `stream_id` under the same seed.
    pub fn replicate(&self, stream_id: u64) -> Self {
        RngConfig { seed: self.seed, stream_id }
    }

    pub fn stream(&self, role: StreamRole) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id.wrapping_mul(ROLES).wrapping_add(role as u64));
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(cfg: RngConfig, role: StreamRole) -> Vec<u64> {
        let mut rng = cfg.stream(role);
        (0..4).map(|_| rng.random()).collect()
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let cfg = RngConfig::new(42, 7);
        let a = draws(cfg, StreamRole::Signal);
        assert_eq!(a, draws(cfg, StreamRole::Signal));
        assert_ne!(a, draws(cfg, StreamRole::ObservationNoise));
        assert_ne!(a, draws(cfg.replicate(8), StreamRole::Signal));
        assert_ne!(a, draws(RngConfig::new(43, 7), StreamRole::Signal));
    }
}
