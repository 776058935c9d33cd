//! Replicate fan-out. Replicates run on a dedicated thread pool in chunks;
//! each chunk's results are handed to the sink in index order, so the fold
//! (and every output byte) is independent of the thread count.

use anyhow::{anyhow, Result};
use rayon::prelude::*;

/// Worker count: `--jobs`, else `STABLAB_JOBS` (both handled by clap), else
/// the available parallelism.
pub fn resolve_jobs(jobs: Option<usize>) -> usize {
    jobs.filter(|j| *j > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub struct Pool {
    pool: rayon::ThreadPool,
    jobs: usize,
}

impl Pool {
    pub fn new(jobs: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
        Ok(Pool { pool, jobs })
    }

    pub fn jobs(&self) -> usize {
        self.jobs
    }

    /// Computes `f(0) … f(count − 1)` concurrently and feeds the results to
    /// `sink` strictly in index order. Stops at the first error (by index).
    pub fn ordered_fold<T, F, S>(&self, count: u64, f: F, mut sink: S) -> Result<()>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync,
        S: FnMut(u64, T) -> Result<()>,
    {
        let chunk = (self.jobs as u64 * 4).max(1);
        let mut lo = 0;
        while lo < count {
            let hi = (lo + chunk).min(count);
            let results: Vec<Result<T>> = self.pool.install(|| (lo..hi).into_par_iter().map(&f).collect());
            for (k, r) in results.into_iter().enumerate() {
                sink(lo + k as u64, r?)?;
            }
            lo = hi;
        }
        Ok(())
    }

    pub fn map<T, F>(&self, count: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync,
    {
        let mut out = Vec::with_capacity(count as usize);
        self.ordered_fold(count, f, |_, v| {
            out.push(v);
            Ok(())
        })?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_threads() {
        let a = Pool::new(1).unwrap().map(100, |i| Ok(i * i)).unwrap();
        let b = Pool::new(7).unwrap().map(100, |i| Ok(i * i)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[9], 81);
    }

    #[test]
    fn errors_propagate() {
        let r = Pool::new(3).unwrap().map(10, |i| if i == 4 { Err(anyhow!("boom")) } else { Ok(i) });
        assert!(r.is_err());
    }
}
