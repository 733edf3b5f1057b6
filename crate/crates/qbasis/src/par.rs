//! Data-parallel execution helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the `map_*` functions fan out over
//! a rayon pool; without it they run sequentially with identical results.
//! The `*_seq` variants always run sequentially so the two execution paths
//! can be compared in one build.
//!
//! Randomized work is split into fixed blocks: each block draws from
//! [`block_rng`], and block outputs are reduced in block order. Results are
//! therefore byte-identical no matter how many workers run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<U: Send, F: Fn(usize) -> U + Sync + Send>(n: usize, f: F) -> Vec<U> {
    (0..n).into_par_iter().map(f).collect()
}

/// Applies `f` to `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F: Fn(usize) -> U>(n: usize, f: F) -> Vec<U> {
    map_indexed_seq(n, f)
}

/// Sequential twin of [`map_indexed`], available in every build.
pub fn map_indexed_seq<U, F: Fn(usize) -> U>(n: usize, f: F) -> Vec<U> {
    (0..n).map(f).collect()
}

/// Applies `f` to each item, collecting results in input order.
#[cfg(feature = "parallel")]
pub fn map_slice<T: Sync, U: Send, F: Fn(&T) -> U + Sync + Send>(items: &[T], f: F) -> Vec<U> {
    items.par_iter().map(f).collect()
}

/// Applies `f` to each item, collecting results in input order.
#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, U, F: Fn(&T) -> U>(items: &[T], f: F) -> Vec<U> {
    map_slice_seq(items, f)
}

/// Sequential twin of [`map_slice`], available in every build.
pub fn map_slice_seq<T, U, F: Fn(&T) -> U>(items: &[T], f: F) -> Vec<U> {
    items.iter().map(f).collect()
}

/// RNG for one work block, derived from the run seed and the block index.
///
/// Uses ChaCha20 stream splitting: every block gets an independent stream of
/// the same keyed cipher, so draws in one block never overlap another's.
pub fn block_rng(seed: u64, block: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(block.wrapping_add(1));
    rng
}

/// Caps the rayon worker count for this process. No-op without the
/// `parallel` feature or if a pool already exists.
pub fn limit_threads(jobs: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn block_rngs_are_independent_of_worker_count() {
        let direct: Vec<u64> = (0..8).map(|b| block_rng(7, b).next_u64()).collect();
        let mapped = map_indexed(8, |b| block_rng(7, b as u64).next_u64());
        let seq = map_indexed_seq(8, |b| block_rng(7, b as u64).next_u64());
        assert_eq!(direct, mapped);
        assert_eq!(direct, seq);
    }

    #[test]
    fn distinct_blocks_differ() {
        let a = block_rng(1, 0).next_u64();
        let b = block_rng(1, 1).next_u64();
        assert_ne!(a, b);
    }
}
