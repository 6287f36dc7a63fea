//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) `Exec::Parallel` fans work out over
//! the rayon pool; without it both modes run sequentially. Results are always
//! returned in index order, so output never depends on the mode.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

/// `(0..n).map(f)` collected in order.
pub fn map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Fills `out` in chunks of `chunk` elements; `f(chunk_index, slice)`.
pub fn for_each_chunk_mut<T, F>(exec: Exec, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        }
        _ => out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let a = map_range(Exec::Sequential, 100, |i| i * i);
        let b = map_range(Exec::Parallel, 100, |i| i * i);
        assert_eq!(a, b);
        let mut x = vec![0usize; 37];
        let mut y = vec![0usize; 37];
        for_each_chunk_mut(Exec::Sequential, &mut x, 5, |c, s| s.iter_mut().for_each(|v| *v = c));
        for_each_chunk_mut(Exec::Parallel, &mut y, 5, |c, s| s.iter_mut().for_each(|v| *v = c));
        assert_eq!(x, y);
        assert_eq!(x[36], 7);
    }
}
