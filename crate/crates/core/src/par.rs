//! Execution strategy for the embarrassingly parallel loops (Monte-Carlo
//! trials, incoherence probes, restricted-spectrum probes).
//!
//! With the `parallel` feature enabled, [`Exec::Parallel`] dispatches onto the
//! current rayon pool; without it, every strategy runs sequentially. Results
//! are always returned in index order so callers see identical output either
//! way.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Maps `f` over `0..len`, preserving index order in the output.
    pub fn map_indexed<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..len).map(f).collect(),
            Exec::Parallel => par_map(len, f),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).map(f).collect()
}

/// Runs `f` inside a pool of `threads` workers (0 = rayon default). Falls back
/// to a direct call when the `parallel` feature is off.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree_on_order() {
        let a = Exec::Sequential.map_indexed(100, |i| i * i);
        let b = Exec::Parallel.map_indexed(100, |i| i * i);
        assert_eq!(a, b);
    }
}
