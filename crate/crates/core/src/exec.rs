//! Order-preserving map over independent jobs, data-parallel when the
//! `parallel` feature is on and sequential otherwise.

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "FDRP_WORKERS";

/// How independent jobs are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    /// Thread pool of the given size; 0 means the runtime default.
    Parallel(usize),
}

impl Mode {
    /// Reads [`WORKERS_ENV`]. `1` selects sequential execution; unset or
    /// unparsable values use the runtime default. Without the `parallel`
    /// feature this is always sequential.
    pub fn from_env() -> Mode {
        if !cfg!(feature = "parallel") {
            return Mode::Sequential;
        }
        match std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
            Some(1) => Mode::Sequential,
            Some(n) => Mode::Parallel(n),
            None => Mode::Parallel(0),
        }
    }
}

/// Applies `f` to every item; output order matches input order in all modes.
pub fn map<T, R, F>(mode: Mode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        Mode::Sequential => items.iter().map(f).collect(),
        Mode::Parallel(workers) => par_map(workers, items, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let run = || items.par_iter().map(&f).collect();
    if workers == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(_workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}
