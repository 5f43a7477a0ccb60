//! Row-parallel helpers with a sequential fallback.
//!
//! Every kernel in the crate is written as an independent per-row (or
//! per-block) computation followed by an ordered merge, so results are
//! bit-identical whatever the worker count. With the `parallel` feature
//! disabled, [`Backend::Rayon`] silently runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution strategy for data-parallel kernels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Sequential,
    #[default]
    Rayon,
}

impl Backend {
    /// Whether this backend actually fans out to a thread pool in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Backend::Rayon
    }
}

/// Applies `f(row_index, row)` to consecutive `row_len`-sized chunks of `data`.
pub fn for_each_row_mut<F>(backend: Backend, data: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert!(row_len > 0 && data.len() % row_len == 0);
    #[cfg(feature = "parallel")]
    if backend.is_parallel() {
        data.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = backend;
    data.chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Evaluates `f` on `0..n` and collects the results in index order.
pub fn map_range<T, F>(backend: Backend, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if backend.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = backend;
    (0..n).map(f).collect()
}

/// Like [`for_each_row_mut`] but each row also produces a value, returned in row order.
pub fn map_rows_mut<T, F>(backend: Backend, data: &mut [f64], row_len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut [f64]) -> T + Sync + Send,
{
    debug_assert!(row_len > 0 && data.len() % row_len == 0);
    #[cfg(feature = "parallel")]
    if backend.is_parallel() {
        return data
            .par_chunks_mut(row_len)
            .enumerate()
            .map(|(i, row)| f(i, row))
            .collect();
    }
    let _ = backend;
    data.chunks_mut(row_len)
        .enumerate()
        .map(|(i, row)| f(i, row))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backends_agree() {
        let mut a = vec![1.0; 64];
        let mut b = a.clone();
        let f = |i: usize, row: &mut [f64]| {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (i * 8 + k) as f64 * 0.5;
            }
            row.iter().sum::<f64>()
        };
        let sa = map_rows_mut(Backend::Sequential, &mut a, 8, f);
        let sb = map_rows_mut(Backend::Rayon, &mut b, 8, f);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert_eq!(
            map_range(Backend::Rayon, 10, |i| i * i),
            map_range(Backend::Sequential, 10, |i| i * i)
        );
    }
}
