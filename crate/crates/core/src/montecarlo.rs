//! Reproducible parallel path runs.
//!
//! The seed of path `i` is
//!
//! ```text
//! mix(x) = let x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9;
//!          let x = (x ^ (x >> 27)) * 0x94D049BB133111EB;
//!          x ^ (x >> 31)
//! seed(master, tag, i) = mix(mix(mix(master + G) ^ tag) + G * (i + 1))
//! ```
//!
//! with `G = 0x9E3779B97F4A7C15` and wrapping 64-bit arithmetic (the
//! SplitMix64 finalizer). Tags of named experiments are the 64-bit FNV-1a hash
//! of the name. Path `i` therefore draws the same stream whatever the worker
//! count or completion order.

use rayon::prelude::*;

use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn mix64(x: u64) -> u64 {
    let x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    let stream = mix64(mix64(master.wrapping_add(GOLDEN)) ^ tag);
    mix64(stream.wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1))))
}

/// 64-bit FNV-1a.
pub fn tag_of(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Runs `job(i, seed_i)` for `i in 0..paths` on `workers` threads and returns
/// the results in index order. The error of the lowest failing index wins.
pub fn run_paths<T, F>(paths: usize, master: u64, tag: u64, workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| {
        (0..paths)
            .into_par_iter()
            .map(|i| job(i, derive_seed(master, tag, i as u64)))
            .collect()
    });
    results.into_iter().collect()
}
