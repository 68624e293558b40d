use mrc_core::pipeline::Executor;
use rayon::prelude::*;

/// Work-stealing executor over a dedicated rayon pool.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    /// `threads == 0` uses one thread per available core.
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
        Pool { pool }
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}
