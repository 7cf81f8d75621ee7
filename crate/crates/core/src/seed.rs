//! Per-task seed derivation.
//!
//! Every random draw in a study is seeded from
//! `derive_seed(base_seed, task, &[coords..])`: the base seed is passed
//! through SplitMix64, then each byte of the task name and each coordinate
//! is xor-ed in and re-mixed. The result depends only on its inputs, so
//! cells can be computed in any order or in parallel.

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base_seed: u64, task: &str, coords: &[u64]) -> u64 {
    let mut h = splitmix64(base_seed);
    for b in task.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    // separates the task name from the coordinates
    h = splitmix64(h ^ 0xFF);
    for &c in coords {
        h = splitmix64(h ^ c);
    }
    h
}
