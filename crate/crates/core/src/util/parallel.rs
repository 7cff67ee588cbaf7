//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) the map runs on the rayon pool;
//! without it the same code path degrades to a sequential loop. Results are
//! collected in input order either way, so outputs never depend on thread
//! count. `seq_map` is always sequential and exists so benchmarks can
//! compare both strategies within one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Indexed variant: `f(i)` for `i in 0..n`, collected in order.
pub fn par_map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Always-sequential reference implementation of [`par_map_range`].
pub fn seq_map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Caps the global rayon pool at `n` threads. Only the first call in a
/// process takes effect (rayon's global pool is build-once); later calls
/// and the no-`parallel` build are no-ops. Returns whether it took effect.
pub fn configure_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_order() {
        let items: Vec<usize> = (0..1000).collect();
        let out = par_map(&items, |&i| i * 2);
        let expected: Vec<usize> = (0..1000).map(|i| i * 2).collect();
        assert_eq!(out, expected);
        assert_eq!(par_map_range(1000, |i| i * 2), expected);
        assert_eq!(seq_map_range(1000, |i| i * 2), expected);
    }
}
