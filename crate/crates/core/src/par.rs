//! Data-parallel helpers. With the `parallel` feature (default) work is spread
//! over rayon's pool; without it, or with [`Execution::Sequential`], the same
//! closures run in a plain loop. Results always come back in input order, so
//! any reduction performed by the caller is deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether parallel execution is actually available in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

pub fn map<T, R, Fun>(exec: Execution, items: &[T], f: Fun) -> Vec<R>
where
    T: Sync,
    R: Send,
    Fun: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

pub fn map_indexed<T, R, Fun>(exec: Execution, items: &[T], f: Fun) -> Vec<R>
where
    T: Sync,
    R: Send,
    Fun: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = exec;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

pub fn try_map<T, R, E, Fun>(exec: Execution, items: &[T], f: Fun) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    Fun: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(exec, items, f).into_iter().collect()
}
