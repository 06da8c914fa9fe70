//! Execution strategy and deterministic reductions.
//!
//! Work is split into fixed-size chunks of cell indices. Each chunk is folded
//! sequentially and the chunk results are combined left to right, so the
//! result is bitwise identical whether chunks run on one thread or many.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Cells per reduction chunk. Part of the numeric contract: changing it
/// changes the summation order.
pub const CHUNK: usize = 4096;

/// Defaults to `Parallel` when the `parallel` feature is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

fn chunks(n: usize) -> Vec<Range<usize>> {
    (0..n.div_ceil(CHUNK))
        .map(|k| k * CHUNK..((k + 1) * CHUNK).min(n))
        .collect()
}

/// Map each chunk of `0..n`, then fold the chunk results in order.
pub fn map_reduce<A, M, F>(exec: Execution, n: usize, map: M, init: A, fold: F) -> A
where
    A: Send,
    M: Fn(Range<usize>) -> A + Sync + Send,
    F: Fn(A, A) -> A,
{
    let parts: Vec<A> = match exec {
        Execution::Sequential => chunks(n).into_iter().map(&map).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => chunks(n).into_par_iter().map(&map).collect(),
    };
    parts.into_iter().fold(init, fold)
}

/// Evaluate `f` on every index of `0..n`, preserving order.
pub fn map_collect<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sum {
    total: f64,
    compensation: f64,
}

impl Sum {
    pub fn add(&mut self, x: f64) {
        let t = self.total + x;
        if self.total.abs() >= x.abs() {
            self.compensation += (self.total - t) + x;
        } else {
            self.compensation += (x - t) + self.total;
        }
        self.total = t;
    }

    pub fn merge(mut self, other: Sum) -> Sum {
        self.add(other.total);
        self.add(other.compensation);
        self
    }

    pub fn value(&self) -> f64 {
        self.total + self.compensation
    }
}

impl FromIterator<f64> for Sum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Sum::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}
