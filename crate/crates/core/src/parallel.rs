//! Order-preserving map over independent work items. With the `parallel`
//! feature the items are spread over a rayon pool of `workers` threads;
//! without it (or with `workers <= 1`) they run in sequence.

use crate::error::{Error, Result};

/// Maps `f` over `items`, preserving input order. Returns the first error in
/// input order if any item fails.
pub fn par_map<T, U, F>(items: &[T], workers: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    if workers == 0 {
        return Err(Error::Config("workers must be >= 1".into()));
    }
    if workers == 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    run(items, workers, f)
}

#[cfg(feature = "parallel")]
fn run<T, U, F>(items: &[T], workers: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect::<Vec<_>>())
        .into_iter()
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run<T, U, F>(items: &[T], _workers: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Whether this build can actually run work concurrently.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
