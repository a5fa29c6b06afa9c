//! Split-stream random number generation.
//!
//! Every path draws from its own ChaCha8 stream selected by `(seed, stream)`.
//! ChaCha's 64-bit stream parameter gives non-overlapping keystreams for
//! distinct stream ids under the same key, so draws are reproducible
//! regardless of how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies one independent stream of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

/// Stream roles; the high bits of a stream id carry the role so that the
/// driver `L`, the auxiliary driver `U` and permutation draws never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Driver = 0,
    Auxiliary = 1,
    Permutation = 2,
    Sticky = 3,
    Calibration = 4,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Stream for replication `index` in the given role.
    pub fn for_role(seed: u64, role: Role, index: u64) -> Self {
        debug_assert!(index < (1 << 48));
        Self::new(seed, ((role as u64) << 48) | index)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Mixes a base seed with a replication counter (splitmix64 finaliser), used
/// to derive per-replication seeds for seed sweeps.
pub fn derive_seed(base: u64, replication: u64) -> u64 {
    let mut z = base.wrapping_add(replication.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
