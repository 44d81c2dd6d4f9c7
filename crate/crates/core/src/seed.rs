//! Stable seed derivation.
//!
//! Every random stream (client shuffles, client selection, data generation,
//! Monte-Carlo batches) gets its own seed hashed from the global seed and a
//! tuple of identifiers, so no RNG is ever shared between clients and results
//! do not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

// Stream tags, kept distinct so unrelated streams never collide.
pub const TAG_DATA: u64 = 0x01;
pub const TAG_SPLIT: u64 = 0x02;
pub const TAG_PARTITION: u64 = 0x03;
pub const TAG_SELECT: u64 = 0x04;
pub const TAG_CLIENT: u64 = 0x05;
pub const TAG_MONTE_CARLO: u64 = 0x06;
pub const TAG_INIT: u64 = 0x07;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a seed together with any number of stream identifiers.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_order_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
        // Pinned so that seeds (and therefore every output file) stay stable across releases.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
