//! Deterministic index-ordered parallel maps.
//!
//! Work is expressed as a map over `0..len`; results are always returned in
//! index order so any reduction performed afterwards is independent of the
//! number of workers.

use alloc::vec::Vec;

/// An executor that evaluates `f(0), .., f(len - 1)` and returns them in order.
pub trait Executor: Sync {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Single-threaded executor.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..len).map(f).collect()
    }
}
