//! Indexed parallel map with a sequential fallback.
//!
//! With the `parallel` feature the work is spread over a rayon pool; without
//! it (or with one worker) everything runs on the calling thread. Output is
//! always ordered by index.

/// Worker count for data-parallel loops. `0` means one per logical CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workers(pub usize);

impl Default for Workers {
    fn default() -> Self {
        Workers(0)
    }
}

impl Workers {
    pub const SEQUENTIAL: Workers = Workers(1);

    pub fn resolved(self) -> usize {
        if self.0 > 0 {
            self.0
        } else {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        }
    }
}

/// `f(0), f(1), ..., f(n-1)`, possibly in parallel, collected in index order.
pub fn map_indexed<T, F>(n: usize, workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        let w = workers.resolved();
        if w > 1 && n > 1 {
            use rayon::prelude::*;
            if w == rayon::current_num_threads() {
                return (0..n).into_par_iter().map(&f).collect();
            }
            match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
                Ok(pool) => return pool.install(|| (0..n).into_par_iter().map(&f).collect()),
                Err(e) => tracing::warn!("falling back to sequential execution: {e}"),
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_indexed`]; returns the lowest-index error.
pub fn try_map_indexed<T, E, F>(n: usize, workers: Workers, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, workers, f).into_iter().collect()
}
