//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature, work is spread over a rayon pool of the
//! requested size. Without it, or with `workers <= 1`, everything runs on the
//! calling thread. Callers make every task own its inputs (including its RNG
//! stream), so the output never depends on the worker count.

use crate::error::Result;
use crate::math::{gemm_rows, Matrix};

/// True when the crate was built with rayon support.
pub fn is_parallel_available() -> bool {
    cfg!(feature = "parallel")
}

/// Maps `f` over `0..n`, keeping output order.
pub fn map_indexed<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 && n > 1 {
        use rayon::prelude::*;
        return with_pool(workers, || (0..n).into_par_iter().map(&f).collect());
    }
    let _ = workers;
    (0..n).map(f).collect()
}

/// Maps `f` over `items`, keeping output order.
pub fn map_slice<I, T, F>(items: &[I], workers: usize, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    map_indexed(items.len(), workers, |i| f(&items[i]))
}

/// Like [`map_indexed`] for fallible tasks; the first error in index order wins.
pub fn try_map_indexed<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_indexed(n, workers, f).into_iter().collect()
}

/// Row-partitioned matrix product. Bit-identical to [`Matrix::matmul`]
/// because every output row is computed by the same kernel.
pub fn matmul(a: &Matrix, b: &Matrix, workers: usize) -> Result<Matrix> {
    if workers <= 1 || !is_parallel_available() || a.rows() < 2 {
        return a.matmul(b);
    }
    // Shape validation happens in the sequential path on an empty product.
    Matrix::zeros(0, a.cols()).matmul(b)?;
    let chunk = a.rows().div_ceil(workers);
    let starts: Vec<usize> = (0..a.rows()).step_by(chunk).collect();
    let blocks = map_slice(&starts, workers, |&s| {
        let end = (s + chunk).min(a.rows());
        let mut out = vec![0.0; (end - s) * b.cols()];
        gemm_rows(a, b, &mut out, s..end);
        out
    });
    let data: Vec<f64> = blocks.into_iter().flatten().collect();
    Matrix::new(a.rows(), b.cols(), data)
}

#[cfg(feature = "parallel")]
fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}
