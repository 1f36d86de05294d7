//! Per-sample parallelism with deterministic output order.

use rayon::prelude::*;

use crate::error::Result;

/// Environment variable capping worker threads; `0` forces sequential runs.
pub const THREADS_ENV: &str = "MEMPROBE_THREADS";

/// Worker cap from [`THREADS_ENV`]; `None` when unset or unparsable.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok()
}

/// Applies `op` to every item and returns results in input order.
///
/// Each sample carries its own derived seed, so the result does not depend
/// on the number of workers. The first error in input order wins.
pub fn map_indexed<T, R, F>(items: &[T], op: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync + Send,
{
    let sequential = || items.iter().enumerate().map(|(i, t)| op(i, t)).collect();
    match thread_cap() {
        Some(0) | Some(1) => sequential(),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| {
                items
                    .par_iter()
                    .enumerate()
                    .map(|(i, t)| op(i, t))
                    .collect()
            }),
            Err(_) => sequential(),
        },
        None => items
            .par_iter()
            .enumerate()
            .map(|(i, t)| op(i, t))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn preserves_order() {
        let items: Vec<usize> = (0..100).collect();
        let out = map_indexed(&items, |i, &v| Ok(i * 1000 + v)).unwrap();
        assert_eq!(out, (0..100).map(|i| i * 1001).collect::<Vec<_>>());
    }

    #[test]
    fn propagates_errors() {
        let items = [1, 2, 3];
        let out: Result<Vec<i32>> = map_indexed(&items, |_, &v| {
            if v == 2 {
                Err(Error::InvalidArgument("two".into()))
            } else {
                Ok(v)
            }
        });
        assert!(out.is_err());
    }
}
