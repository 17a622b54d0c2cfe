//! Order-preserving indexed map, parallel when the `parallel` feature is on.
//!
//! Every use site is element-wise (one output per index, no cross-element
//! reduction), so the parallel and sequential paths produce bitwise identical
//! vectors for any thread count. Reductions (back projection, objective sums)
//! deliberately stay sequential for fixed-order determinism.

use alloc::vec::Vec;

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
