//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Mode::Parallel`] runs on the rayon
//! pool; without it every mode runs sequentially. Results are collected in
//! input order either way, so outputs do not depend on the mode.

/// Environment variable read by [`init_threads`].
pub const THREADS_ENV: &str = "POINTGAME_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Sequential,
    #[default]
    Parallel,
}

impl Mode {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Mode::Parallel
    }
}

/// Ordered map over a slice.
pub fn map<T, R, F>(mode: Mode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Ordered map over `0..n`.
pub fn map_range<R, F>(mode: Mode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Sizes the global pool from [`THREADS_ENV`]. Returns the thread count in effect.
pub fn init_threads() -> usize {
    let requested = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = requested {
            // a pool may already exist; keep it
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let v: Vec<u64> = (0..1000).collect();
        let a = map(Mode::Sequential, &v, |x| x * x);
        let b = map(Mode::Parallel, &v, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(map_range(Mode::Parallel, 5, |i| i), vec![0, 1, 2, 3, 4]);
    }
}
