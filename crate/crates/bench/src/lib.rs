//! Shared fixtures for the criterion benches.

use iboss_core::simgen::generate_dataset;
use iboss_core::{CaseKind, CovariateCase, DataBlock};

/// Case-1 data with responses.
pub fn normal_data(n: usize, p: usize, seed: u64) -> DataBlock {
    generate_dataset(CovariateCase::new(CaseKind::Normal, p).expect("p > 0"), n, seed, 1.0).expect("generate")
}

/// Deterministic pseudo-random column for selection kernels.
pub fn column(n: usize, seed: u64) -> Vec<f64> {
    let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}
