//! Trial execution. With the `parallel` feature, indexed work is spread over
//! a rayon pool; without it every execution is sequential. Results are
//! always returned in index order, so callers reduce them deterministically.

use serde::{Deserialize, Serialize};

/// How to run a batch of independent, index-addressed tasks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    /// Use the ambient rayon pool.
    #[default]
    Parallel,
    /// Use a dedicated pool with this many workers.
    Workers(usize),
}

impl Execution {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            None => Execution::Parallel,
            Some(1) => Execution::Sequential,
            Some(w) => Execution::Workers(w),
        }
    }

    /// Evaluates `f(0..count)` and returns the results in index order.
    pub fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match *self {
            Execution::Sequential => (0..count).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => par_map(count, f),
            #[cfg(feature = "parallel")]
            Execution::Workers(w) => match rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
                Ok(pool) => pool.install(|| par_map(count, f)),
                Err(_) => (0..count).map(f).collect(),
            },
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel | Execution::Workers(_) => (0..count).map(f).collect(),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}
