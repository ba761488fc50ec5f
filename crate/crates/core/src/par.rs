//! Thin execution layer: ordered parallel maps when the `parallel` feature
//! is on, plain loops otherwise. Every map returns results in index order,
//! so callers never observe the schedule.

/// Maps `f` over `0..n`, in parallel when `parallel` is set and the
/// feature is enabled.
pub fn map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Runs `f` with `n_workers` threads available to the maps above.
/// `0` means the global default pool.
pub fn with_workers<T: Send, F: FnOnce() -> T + Send>(n_workers: usize, f: F) -> T {
    #[cfg(feature = "parallel")]
    {
        if n_workers > 0 {
            match rayon::ThreadPoolBuilder::new().num_threads(n_workers).build() {
                Ok(pool) => return pool.install(f),
                Err(e) => log::warn!("could not build a {n_workers}-thread pool ({e}); using the global pool"),
            }
        }
    }
    let _ = n_workers;
    f()
}

/// Whether this build can run anything in parallel.
pub fn available() -> bool {
    cfg!(feature = "parallel")
}

/// Pairwise (cascade) sum with a fixed split pattern, so the result depends
/// only on the values and their order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
