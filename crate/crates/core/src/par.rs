//! Data-parallel map helpers.
//!
//! Per-item work in this crate (flipping records, scoring responses,
//! encoding texts) is embarrassingly parallel. `par_map` runs on rayon when
//! the `parallel` feature is enabled and falls back to a sequential loop
//! otherwise; output order always matches input order, so results are
//! identical either way. `seq_map` is the sequential path kept callable in
//! both builds for benchmarking.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    seq_map(items, f)
}

/// Sequential map with the same signature as [`par_map`].
pub fn seq_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_order() {
        let items: Vec<u32> = (0..1000).collect();
        let doubled = par_map(&items, |x| x * 2);
        let expected: Vec<u32> = items.iter().map(|x| x * 2).collect();
        assert_eq!(doubled, expected);
    }
}
