//! Data-parallel map helpers.
//!
//! With the `parallel` feature (on by default) these fan out over rayon's
//! global pool; without it they run sequentially with identical semantics.
//! Both paths preserve input order, and callers keep reductions sequential,
//! so results are bit-identical across feature choice and thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Order-preserving map over a slice.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Order-preserving map over an index range, for producers without an input
/// slice (e.g. seeded generation of record i).
pub fn par_map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Explicit sequential variants, kept callable regardless of features so
/// benchmarks can compare the two paths in one build.
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

pub fn seq_map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_elementwise() {
        let xs: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x.wrapping_mul(0x9E37_79B9).rotate_left(13);
        assert_eq!(par_map(&xs, f), seq_map(&xs, f));
    }

    #[test]
    fn range_map_preserves_order() {
        let out = par_map_range(64, |i| i * i);
        let expect: Vec<usize> = (0..64).map(|i| i * i).collect();
        assert_eq!(out, expect);
    }
}
