//! Seed-keyed hashing used wherever a value must be a reproducible
//! function of the scan seed.

use num_bigint::BigUint;
use siphasher::sip128::{Hasher128, SipHasher13};
use std::hash::Hasher;

/// SipHash-1-3 with 128-bit output over length-prefixed parts.
pub(crate) fn sip128(seed: u64, domain: &[u8], parts: &[&[u8]]) -> u128 {
    let mut h = SipHasher13::new_with_keys(seed, 0x6865_786d_6170_2e6b);
    h.write(&(domain.len() as u64).to_le_bytes());
    h.write(domain);
    for part in parts {
        h.write(&(part.len() as u64).to_le_bytes());
        h.write(part);
    }
    h.finish128().as_u128()
}

/// Uniform-ish value in `[0, modulus)`, with 64 bits of slack against
/// modulo bias.
pub(crate) fn hash_below(seed: u64, domain: &[u8], counter: u64, modulus: &BigUint) -> BigUint {
    let chunks = (modulus.bits() + 64).div_ceil(128);
    let mut acc = BigUint::default();
    for chunk in 0..chunks {
        let word = sip128(seed, domain, &[&counter.to_le_bytes(), &chunk.to_le_bytes()]);
        acc = (acc << 128u32) | BigUint::from(word);
    }
    acc % modulus
}
