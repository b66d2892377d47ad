//! Order-preserving data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it every [`Parallelism`] setting runs sequentially. Results always
//! come back in input order, so callers get identical output for any worker
//! count.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Sequential,
    /// Worker count; `0` means one per available core.
    Threads(usize),
}

impl Parallelism {
    pub fn from_jobs(jobs: usize) -> Self {
        if jobs == 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Threads(jobs)
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && matches!(self, Parallelism::Threads(n) if n != 1)
    }
}

pub fn map_ordered<T, R, F>(items: &[T], par: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if let Parallelism::Threads(n) = par {
        if n != 1 {
            use rayon::prelude::*;
            if n == 0 {
                return items.par_iter().map(&f).collect();
            }
            match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => return pool.install(|| items.par_iter().map(&f).collect()),
                Err(e) => {
                    log::warn!("could not build a {n}-thread pool ({e}); running sequentially")
                }
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = par;
    items.iter().map(f).collect()
}
