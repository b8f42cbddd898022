//! Stable seed derivation for deterministic, order-independent randomness.
//!
//! Parallel stages (regions, networks, pipeline cells) each own an RNG
//! derived from the run seed plus a stable salt, so serial and concurrent
//! executions produce identical output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub(crate) fn derive(base: u64, salts: &[u64]) -> u64 {
    let mut h = splitmix(base);
    for &s in salts {
        h = splitmix(h ^ splitmix(s));
    }
    h
}

pub(crate) fn salt_str(s: &str) -> u64 {
    // FNV-1a, 64 bit
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn rng_from(base: u64, salts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, salts))
}
