//! Process-wide instrumentation counters.

use std::sync::atomic::{AtomicU64, Ordering};

static DENSE_HESSIAN_ALLOCS: AtomicU64 = AtomicU64::new(0);

/// Called at every site that materializes a d x d Hessian-sized matrix.
/// The matrix-free optimization path must never advance this counter.
#[inline]
pub(crate) fn note_dense_alloc() {
    DENSE_HESSIAN_ALLOCS.fetch_add(1, Ordering::Relaxed);
}

/// Number of dense d x d Hessian materializations so far in this process.
pub fn dense_hessian_allocs() -> u64 {
    DENSE_HESSIAN_ALLOCS.load(Ordering::Relaxed)
}
