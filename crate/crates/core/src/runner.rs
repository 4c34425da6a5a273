//! Deterministic replication runner.
//!
//! Replications are sharded by index modulo the worker count, each shard runs
//! on its own thread, and results are reassembled in replication order before
//! any reduction. The output is therefore independent of `workers`.

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{Error, Result};

pub struct Runner {
    workers: usize,
    pool: ThreadPool,
}

impl Runner {
    /// `workers == 0` means one worker per logical core.
    pub fn new(workers: usize) -> Result<Self> {
        let workers = if workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            workers
        };
        let pool = ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { workers, pool })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Evaluate `task(r)` for `r in 0..count` and return the results in index
    /// order. The first failing replication (by index) aborts the batch.
    pub fn replicate<T, F>(&self, count: usize, task: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync,
    {
        let workers = self.workers;
        let shards: Vec<Vec<Result<T>>> = self.pool.install(|| {
            (0..workers)
                .into_par_iter()
                .map(|w| {
                    (w..count)
                        .step_by(workers)
                        .map(|r| task(r as u64))
                        .collect()
                })
                .collect()
        });
        let mut iters: Vec<_> = shards.into_iter().map(Vec::into_iter).collect();
        let mut out = Vec::with_capacity(count);
        for r in 0..count {
            let item = iters[r % workers].next().expect("shard holds every index");
            out.push(item?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let f = |r: u64| Ok((r * r) as f64 / 3.0);
        let one = Runner::new(1).unwrap().replicate(37, f).unwrap();
        for w in [2, 3, 8] {
            assert_eq!(Runner::new(w).unwrap().replicate(37, f).unwrap(), one);
        }
        assert_eq!(one[5], 25.0 / 3.0);
    }

    #[test]
    fn first_failure_by_index_wins() {
        let f = |r: u64| {
            if r == 3 || r == 7 {
                Err(Error::Degenerate(format!("replication {r}")))
            } else {
                Ok(r)
            }
        };
        for w in [1, 4] {
            let err = Runner::new(w).unwrap().replicate(10, f).unwrap_err();
            assert_eq!(err.to_string(), "degenerate input: replication 3");
        }
    }
}
