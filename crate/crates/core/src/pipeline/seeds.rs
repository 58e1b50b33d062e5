use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed number `counter` of the stream rooted at `root`.
pub fn derive_seed(root: u64, counter: u64) -> u64 {
    splitmix64(root.wrapping_add(counter.wrapping_mul(GOLDEN)))
}

/// Named streams in counter order. Appending keeps existing seeds stable.
pub const SEED_STREAMS: [&str; 4] = ["init", "train", "sample", "music"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub root: u64,
    pub seeds: BTreeMap<String, u64>,
}

impl SeedPlan {
    pub fn new(root: u64) -> Self {
        let seeds = SEED_STREAMS
            .iter()
            .enumerate()
            .map(|(i, name)| (name.to_string(), derive_seed(root, i as u64 + 1)))
            .collect();
        Self { root, seeds }
    }

    pub fn get(&self, stream: &str) -> u64 {
        self.seeds[stream]
    }

    /// Seed for item `i` (zero-based) of a stream, such as one scene's sample.
    pub fn item(&self, stream: &str, i: usize) -> u64 {
        derive_seed(self.get(stream), i as u64 + 1)
    }
}
