//! Bit-array Bloom filter sized from a target false-positive rate.
//!
//! Sizing follows m = ceil(-n ln p / (ln 2)^2) and k = round((m/n) ln 2);
//! the predicted false-positive rate at n inserted elements is
//! (1 - e^(-kn/m))^k. Bit positions come from double hashing over the two
//! 64-bit halves of a MurmurHash3 x64_128 digest of the key bytes.

use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BloomParams {
    /// Expected element count the filter is sized for.
    pub n: u64,
    /// Target false-positive probability.
    pub p: f64,
    /// Bit-array size in bits.
    pub m: u64,
    /// Number of hash functions.
    pub k: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum BloomError {
    #[error("expected element count must be at least 1")]
    ZeroCapacity,
    #[error("false-positive probability must be in (0, 1), got {0}")]
    ProbabilityOutOfRange(f64),
}

/// Sizes a filter for `n` expected elements at target false-positive
/// probability `p`.
pub fn size_for(n: u64, p: f64) -> Result<BloomParams, BloomError> {
    if n == 0 {
        return Err(BloomError::ZeroCapacity);
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(BloomError::ProbabilityOutOfRange(p));
    }
    let ln2 = std::f64::consts::LN_2;
    let m = (-(n as f64) * p.ln() / (ln2 * ln2)).ceil().max(1.0) as u64;
    let k = ((m as f64 / n as f64) * ln2).round().max(1.0) as u32;
    Ok(BloomParams { n, p, m, k })
}

/// Predicted false-positive rate of an (m, k) filter holding n elements:
/// (1 - e^(-kn/m))^k.
pub fn predicted_fpr(m: u64, k: u32, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let exponent = -((k as f64) * (n as f64) / (m as f64));
    (1.0 - exponent.exp()).powi(k as i32)
}

pub struct BloomFilter {
    params: BloomParams,
    bits: Vec<AtomicU64>,
}

impl BloomFilter {
    pub fn new(params: BloomParams) -> Self {
        let words = params.m.div_ceil(64) as usize;
        let mut bits = Vec::with_capacity(words);
        bits.resize_with(words, || AtomicU64::new(0));
        Self { params, bits }
    }

    /// Convenience constructor: size for (n, p) and allocate.
    pub fn with_capacity(n: u64, p: f64) -> Result<Self, BloomError> {
        Ok(Self::new(size_for(n, p)?))
    }

    pub fn params(&self) -> &BloomParams {
        &self.params
    }

    fn positions(&self, key: &[u8]) -> impl Iterator<Item = u64> + '_ {
        let (h1, h2) = murmur3_x64_128(key, 0);
        let m = self.params.m;
        (0..self.params.k as u64).map(move |i| h1.wrapping_add(i.wrapping_mul(h2)) % m)
    }

    pub fn insert(&self, key: &[u8]) {
        for pos in self.positions(key) {
            let word = (pos / 64) as usize;
            let bit = 1u64 << (pos % 64);
            self.bits[word].fetch_or(bit, Ordering::SeqCst);
        }
    }

    pub fn maybe_contains(&self, key: &[u8]) -> bool {
        self.positions(key).all(|pos| {
            let word = (pos / 64) as usize;
            let bit = 1u64 << (pos % 64);
            self.bits[word].load(Ordering::SeqCst) & bit != 0
        })
    }

    /// Number of set bits; grows monotonically under insert.
    pub fn popcount(&self) -> u64 {
        self.bits.iter().map(|w| w.load(Ordering::SeqCst).count_ones() as u64).sum()
    }
}

/// MurmurHash3 x64_128 (Appleby's reference algorithm); returns the two
/// 64-bit halves used as the double-hashing bases.
pub fn murmur3_x64_128(data: &[u8], seed: u64) -> (u64, u64) {
    const C1: u64 = 0x87c3_7b91_1142_53d5;
    const C2: u64 = 0x4cf5_ad43_2745_937f;

    let mut h1 = seed;
    let mut h2 = seed;
    let nblocks = data.len() / 16;

    for i in 0..nblocks {
        let k1 = u64::from_le_bytes(data[i * 16..i * 16 + 8].try_into().unwrap());
        let k2 = u64::from_le_bytes(data[i * 16 + 8..i * 16 + 16].try_into().unwrap());

        let k1 = k1.wrapping_mul(C1).rotate_left(31).wrapping_mul(C2);
        h1 ^= k1;
        h1 = h1.rotate_left(27).wrapping_add(h2).wrapping_mul(5).wrapping_add(0x52dc_e729);

        let k2 = k2.wrapping_mul(C2).rotate_left(33).wrapping_mul(C1);
        h2 ^= k2;
        h2 = h2.rotate_left(31).wrapping_add(h1).wrapping_mul(5).wrapping_add(0x3849_5ab5);
    }

    let tail = &data[nblocks * 16..];
    let mut k1 = 0u64;
    let mut k2 = 0u64;
    for (i, &b) in tail.iter().enumerate().skip(8) {
        k2 |= (b as u64) << ((i - 8) * 8);
    }
    if tail.len() > 8 {
        k2 = k2.wrapping_mul(C2).rotate_left(33).wrapping_mul(C1);
        h2 ^= k2;
    }
    for (i, &b) in tail.iter().enumerate().take(8) {
        k1 |= (b as u64) << (i * 8);
    }
    if !tail.is_empty() {
        k1 = k1.wrapping_mul(C1).rotate_left(31).wrapping_mul(C2);
        h1 ^= k1;
    }

    h1 ^= data.len() as u64;
    h2 ^= data.len() as u64;
    h1 = h1.wrapping_add(h2);
    h2 = h2.wrapping_add(h1);
    h1 = fmix64(h1);
    h2 = fmix64(h2);
    h1 = h1.wrapping_add(h2);
    h2 = h2.wrapping_add(h1);
    (h1, h2)
}

fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^ (k >> 33)
}
