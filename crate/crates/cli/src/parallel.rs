use std::ops::Range;

use oslr_core::simulate::{Merge, Runner, CHUNK};
use rayon::prelude::*;

use crate::CliError;

/// Spreads fixed-size replicate chunks over a rayon pool. Chunk boundaries
/// do not depend on the worker count and tallies are integer sums, so the
/// result is identical to a sequential run.
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    /// `workers = None` uses the machine's parallelism.
    pub fn new(workers: Option<usize>) -> Result<Self, CliError> {
        if workers == Some(0) {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Runner for Parallel {
    fn map_reduce<T, F>(&self, replications: u64, job: F) -> T
    where
        T: Merge + Send,
        F: Fn(Range<u64>) -> T + Sync,
    {
        let chunks = replications.div_ceil(CHUNK).max(1);
        self.pool.install(|| {
            (0..chunks)
                .into_par_iter()
                .map(|c| job(c * CHUNK..((c + 1) * CHUNK).min(replications)))
                .reduce_with(|mut a, b| {
                    a.merge(b);
                    a
                })
                .expect("at least one chunk")
        })
    }
}
