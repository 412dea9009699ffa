//! Worker-pool plumbing with deterministic reductions.
//!
//! `BPSE_THREADS` caps parallelism. Parallel maps collect results in input
//! order and all floating-point reductions fold sequentially over that order,
//! so results are bit-identical regardless of the thread count.

use std::sync::OnceLock;

use rayon::prelude::*;
use rayon::ThreadPool;

static POOL: OnceLock<ThreadPool> = OnceLock::new();

/// The shared worker pool, sized from `BPSE_THREADS` (default: all cores).
pub fn pool() -> &'static ThreadPool {
    POOL.get_or_init(|| {
        let threads = std::env::var("BPSE_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0);
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        builder.build().expect("failed to build worker pool")
    })
}

/// Maps `f` over `items` in parallel; the output preserves input order.
pub fn ordered_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    pool().install(|| items.par_iter().map(f).collect())
}

/// Maps `f` over indices `0..n` in parallel; output preserves index order.
pub fn ordered_map_idx<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    pool().install(|| (0..n).into_par_iter().map(f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_map_preserves_order() {
        let items: Vec<usize> = (0..100).collect();
        let out = ordered_map(&items, |&x| x * 2);
        assert_eq!(out, (0..100).map(|x| x * 2).collect::<Vec<_>>());
    }
}
