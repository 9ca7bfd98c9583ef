/// Execution mode for data-parallel loops.
///
/// `Parallel` falls back to sequential execution when the crate is built
/// without the `parallel` feature. Both modes produce bit-identical output:
/// work is split into fixed-size chunks and partial results are combined in
/// chunk order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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

/// Rows per reduction chunk. Part of the numeric contract: changing it
/// changes floating-point summation order.
pub(crate) const CHUNK: usize = 256;

impl Exec {
    /// Maps `f` over `0..n`, returning results in index order.
    pub(crate) fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Folds each `CHUNK`-sized block of `0..n` with `fold` and returns the
    /// per-chunk results in chunk order.
    pub(crate) fn map_chunks<T, F>(self, n: usize, fold: F) -> Vec<T>
    where
        T: Send,
        F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
    {
        let chunks = n.div_ceil(CHUNK);
        self.map(chunks, |c| fold(c * CHUNK..((c + 1) * CHUNK).min(n)))
    }
}
