//! Data-parallel execution of independent block tasks.
//!
//! With the `parallel` feature (on by default) and more than one worker, tasks
//! run on a dedicated rayon pool. Otherwise they run in a plain loop. Results
//! always come back in task order, so callers that reduce them serially get
//! the same bits regardless of the worker count.

use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How block tasks are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel { workers: usize },
}

pub struct Executor {
    execution: Execution,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("execution", &self.execution)
            .finish()
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Self {
            execution: Execution::Sequential,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// One worker, or a build without the `parallel` feature, gives the
    /// sequential loop.
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if workers == 1 || !cfg!(feature = "parallel") {
            return Ok(Self::sequential());
        }
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .thread_name(|i| format!("netrecon-worker-{i}"))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(Self {
                execution: Execution::Parallel { workers },
                pool: Some(pool),
            })
        }
        #[cfg(not(feature = "parallel"))]
        unreachable!()
    }

    pub fn execution(&self) -> Execution {
        self.execution
    }

    pub fn workers(&self) -> usize {
        match self.execution {
            Execution::Sequential => 1,
            Execution::Parallel { workers } => workers,
        }
    }

    /// Runs `f(i, &mut items[i])` for every item. On failure the error of the
    /// lowest failing index is returned, independent of scheduling.
    pub fn try_for_each_mut<T, F>(&self, items: &mut [T], f: F) -> Result<()>
    where
        T: Send,
        F: Fn(usize, &mut T) -> Result<()> + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            let outcomes: Vec<Result<()>> = pool.install(|| {
                items
                    .par_iter_mut()
                    .enumerate()
                    .map(|(i, item)| f(i, item))
                    .collect()
            });
            return outcomes.into_iter().collect();
        }
        items
            .iter_mut()
            .enumerate()
            .try_for_each(|(i, item)| f(i, item))
    }

    /// Ordered map over `0..n`.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_worker_is_sequential() {
        let ex = Executor::new(1).unwrap();
        assert_eq!(ex.execution(), Execution::Sequential);
        assert!(Executor::new(0).is_err());
    }

    #[test]
    fn results_keep_task_order() {
        for workers in [1, 2, 4] {
            let ex = Executor::new(workers).unwrap();
            let out = ex.map(100, |i| i * i);
            assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn first_error_by_index() {
        let ex = Executor::new(3).unwrap();
        let mut items = vec![0usize; 20];
        let err = ex
            .try_for_each_mut(&mut items, |i, v| {
                *v = i;
                if i == 7 || i == 13 {
                    Err(Error::Divergence { step: i })
                } else {
                    Ok(())
                }
            })
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 7 }));
    }
}
