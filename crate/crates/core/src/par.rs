//! Execution strategy for the data-parallel loops.
//!
//! Every parallel code path has a sequential twin that produces identical
//! output: work is split by index and results are collected in index order,
//! so no reduction depends on thread scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a data-parallel loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    /// Plain iterators on the calling thread.
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    /// Rayon's global pool.
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Exec {
    /// Map `f` over `0..n`, collecting in index order.
    pub(crate) fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
        }
    }

    /// Map `f` over a slice, collecting in order.
    pub(crate) fn map_slice<'a, S, T, F>(self, items: &'a [S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&'a S) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
        }
    }

    /// Flat-map `f` over `0..n`, concatenating in index order.
    pub(crate) fn flat_map_range<T, I, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        I: IntoIterator<Item = T>,
        I::IntoIter: Send,
        F: Fn(usize) -> I + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).flat_map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().flat_map_iter(f).collect(),
        }
    }

    /// Apply `f` to every element in place.
    pub(crate) fn for_each_mut<T, F>(self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(&mut T) + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter_mut().for_each(f),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter_mut().for_each(f),
        }
    }

    /// Run two closures, possibly concurrently.
    pub(crate) fn join<A, B, RA, RB>(self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send,
    {
        match self {
            Exec::Sequential => (a(), b()),
            #[cfg(feature = "parallel")]
            Exec::Parallel => rayon::join(a, b),
        }
    }
}
