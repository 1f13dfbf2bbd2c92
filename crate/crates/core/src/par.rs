//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper produces bit-identical results under either policy: maps
//! preserve order and reductions sum fixed-size chunks in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic reductions.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecPolicy {
    Sequential,
    /// Falls back to sequential when the `parallel` feature is off.
    Parallel,
}

impl Default for ExecPolicy {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecPolicy::Parallel
        } else {
            ExecPolicy::Sequential
        }
    }
}

pub fn map_range<T, F>(policy: ExecPolicy, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match policy {
        #[cfg(feature = "parallel")]
        ExecPolicy::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

pub fn try_map_range<T, E, F>(policy: ExecPolicy, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    match policy {
        #[cfg(feature = "parallel")]
        ExecPolicy::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// `out[i] = f(i)` in place.
pub fn fill<T, F>(policy: ExecPolicy, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match policy {
        #[cfg(feature = "parallel")]
        ExecPolicy::Parallel => out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i)),
        _ => out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i)),
    }
}

/// Sum of `f(i)` over `0..n`, reduced in fixed chunks so the result does not
/// depend on the thread count.
pub fn sum_range<F>(policy: ExecPolicy, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        (lo..hi).map(&f).sum::<f64>()
    };
    map_range(policy, chunks, partial).into_iter().sum()
}

pub fn dot(policy: ExecPolicy, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_range(policy, a.len(), |i| a[i] * b[i])
}

pub fn norm2(policy: ExecPolicy, a: &[f64]) -> f64 {
    dot(policy, a, a).sqrt()
}

/// Caps the global worker pool; call once before any parallel work.
#[cfg(feature = "parallel")]
pub fn init_threads(threads: Option<usize>) -> bool {
    match threads {
        Some(t) if t > 0 => rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_ok(),
        _ => false,
    }
}

#[cfg(not(feature = "parallel"))]
pub fn init_threads(_threads: Option<usize>) -> bool {
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree_bitwise() {
        let v: Vec<f64> = (0..10_001).map(|i| ((i as f64) * 0.37).sin() * 1e3).collect();
        let s = dot(ExecPolicy::Sequential, &v, &v);
        let p = dot(ExecPolicy::Parallel, &v, &v);
        assert_eq!(s.to_bits(), p.to_bits());
        let ms = map_range(ExecPolicy::Sequential, 100, |i| i * i);
        let mp = map_range(ExecPolicy::Parallel, 100, |i| i * i);
        assert_eq!(ms, mp);
    }

    #[test]
    fn try_map_propagates_error() {
        let r: Result<Vec<usize>, usize> =
            try_map_range(ExecPolicy::default(), 50, |i| if i == 17 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(17));
    }

    #[test]
    fn fill_writes_every_slot() {
        let mut v = vec![0usize; 33];
        fill(ExecPolicy::default(), &mut v, |i| 2 * i);
        assert!(v.iter().enumerate().all(|(i, x)| *x == 2 * i));
    }
}
