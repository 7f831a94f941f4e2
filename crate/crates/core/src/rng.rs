//! Seed derivation.
//!
//! Every random stream is a ChaCha8 generator keyed by
//! `splitmix64(master ^ splitmix64(domain))` and positioned on stream
//! `index`. Replication `r` of an experiment therefore always sees the same
//! numbers regardless of thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags separating the purposes a master seed is used for.
pub mod domain {
    pub const QUANTILE: u64 = 1;
    pub const EXPECTED_COST: u64 = 2;
    pub const REPLICATION: u64 = 3;
    pub const REALIZATION: u64 = 4;
    pub const SEARCH: u64 = 5;
    pub const STOCHASTIC_CORE: u64 = 6;
    pub const FIXTURE: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(master: u64, domain: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master ^ splitmix64(domain)));
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, domain::REPLICATION, 3).random();
        let b: u64 = stream(7, domain::REPLICATION, 3).random();
        let c: u64 = stream(7, domain::REPLICATION, 4).random();
        let d: u64 = stream(7, domain::QUANTILE, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
