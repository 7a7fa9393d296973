//! Deterministic block-parallel execution.
//!
//! Work over `n` trial indices is cut into fixed-size blocks. Each block owns
//! a ChaCha stream selected by its index, so results do not depend on how
//! many workers run the blocks, and outputs are collected in block order.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Trials per block.
pub const BLOCK_SIZE: u64 = 1 << 15;

/// Environment variable capping the number of worker threads.
pub const WORKERS_ENV: &str = "RBL_WORKERS";

/// How many threads to use. `Serial` runs on the calling thread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Workers {
    Serial,
    Threads(usize),
    /// Rayon's global pool.
    #[default]
    Auto,
}

impl Workers {
    /// `RBL_WORKERS=0` means serial; unset or unparsable means automatic.
    pub fn from_env() -> Self {
        match std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
        {
            Some(0) => Workers::Serial,
            Some(n) => Workers::Threads(n),
            None => Workers::Auto,
        }
    }

    pub fn count(n: usize) -> Self {
        if n == 0 {
            Workers::Serial
        } else {
            Workers::Threads(n)
        }
    }
}

/// Random stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Number of blocks covering `n` items.
pub fn block_count(n: u64) -> u64 {
    n.div_ceil(BLOCK_SIZE)
}

/// Runs `f(block_index, item_range)` over all blocks and returns the results
/// in block order.
pub fn map_blocks<T, F>(n: u64, workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, Range<u64>) -> T + Sync + Send,
{
    let blocks = block_count(n);
    let range = |i: u64| i * BLOCK_SIZE..((i + 1) * BLOCK_SIZE).min(n);
    match workers {
        Workers::Serial => (0..blocks).map(|i| f(i, range(i))).collect(),
        Workers::Auto => (0..blocks)
            .into_par_iter()
            .map(|i| f(i, range(i)))
            .collect(),
        Workers::Threads(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| {
                (0..blocks)
                    .into_par_iter()
                    .map(|i| f(i, range(i)))
                    .collect()
            }),
            Err(_) => (0..blocks).map(|i| f(i, range(i))).collect(),
        },
    }
}
