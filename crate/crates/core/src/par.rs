//! Execution strategy for the data-parallel inner loops.
//!
//! Every hot loop in the crate goes through [`Exec`], so the same code path
//! runs either on the rayon pool or on the calling thread. With the
//! `parallel` feature disabled, [`Exec::Parallel`] degrades to sequential
//! execution. Results never depend on the strategy: parallel helpers return
//! their outputs in index order.

use std::ops::Range;

/// Rows per work unit for chunked loops.
pub const CHUNK_ROWS: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Evaluate `f` over `0..n`, preserving order.
    pub fn map_indices<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Evaluate `f` over consecutive row ranges of at most `chunk` rows and
    /// return the per-chunk results in range order.
    pub fn map_chunks<T, F>(self, n: usize, chunk: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<usize>) -> T + Sync + Send,
    {
        let chunk = chunk.max(1);
        let ranges: Vec<Range<usize>> = (0..n)
            .step_by(chunk)
            .map(|start| start..(start + chunk).min(n))
            .collect();
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return ranges.into_par_iter().map(f).collect();
        }
        ranges.into_iter().map(f).collect()
    }

    /// Map over a slice, preserving order.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Stable sort.
    pub fn sort_by<T, F>(self, items: &mut [T], cmp: F)
    where
        T: Send,
        F: Fn(&T, &T) -> std::cmp::Ordering + Sync,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            items.par_sort_by(cmp);
            return;
        }
        items.sort_by(cmp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_in_order() {
        for exec in [Exec::Sequential, Exec::Parallel] {
            let spans = exec.map_chunks(10, 3, |r| (r.start, r.end));
            assert_eq!(spans, vec![(0, 3), (3, 6), (6, 9), (9, 10)]);
            assert!(exec.map_chunks(0, 3, |r| r.len()).is_empty());
        }
    }

    #[test]
    fn map_indices_is_ordered() {
        let seq = Exec::Sequential.map_indices(1000, |i| i * 2);
        let par = Exec::Parallel.map_indices(1000, |i| i * 2);
        assert_eq!(seq, par);
    }
}
