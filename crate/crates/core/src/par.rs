//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the batch loops of the pipeline
//! (site enumeration, candidate validation, similarity, heuristics) run on
//! rayon; without it, or with [`Strategy::Sequential`], they run in order on
//! the calling thread. Results are always returned in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Parallel when the feature is on, sequential otherwise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Strategy {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(strategy: Strategy, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match strategy {
        Strategy::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Strategy::Parallel => items.par_iter().map(f).collect(),
    }
}

/// Runs `f` over `items` on a pool of at most `workers` threads. Each call
/// receives the index of the worker executing it, in `0..workers`, so the
/// caller can keep per-worker state (such as a private workspace).
pub fn map_with_workers<T, R, F>(workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
    #[cfg(feature = "parallel")]
    if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("failed to build worker pool");
        return pool.install(|| {
            items
                .par_iter()
                .map(|item| f(rayon::current_thread_index().unwrap_or(0), item))
                .collect()
        });
    }
    items.iter().map(|item| f(0, item)).collect()
}
