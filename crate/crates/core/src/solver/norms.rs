//! Discrete norms of solved grid fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::geometry::{AxisKind, ChartGrid};
use crate::par::{map_range, ExecPolicy};

use super::SolverError;

/// Node pairs beyond which the Hölder scan is subsampled.
pub const MAX_PAIRS: usize = 1_000_000;
/// Pair offsets are limited to this many spacings (Euclidean in index space).
pub const MAX_OFFSET: isize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct C1AlphaNorm {
    pub c0: f64,
    /// Sup of first difference quotients.
    pub c1: f64,
    /// Hölder quotient of the first difference quotients.
    pub holder_du: f64,
    /// Hölder quotient of the field itself (diagnostic).
    pub holder_u: f64,
    pub pairs_scanned: usize,
    pub subsampled: bool,
    pub norm: f64,
}

/// Forward difference quotients (backward at the far end of a line axis).
fn first_differences(u: &[f64], grid: &ChartGrid) -> Vec<Vec<f64>> {
    let d = grid.dim();
    map_range(ExecPolicy::default(), grid.len(), |node| {
        (0..d)
            .map(|a| {
                let h = grid.axis(a).h;
                let mut off = vec![0isize; d];
                off[a] = 1;
                if let Some(nb) = grid.neighbor(node, &off) {
                    return (u[nb] - u[node]) / h;
                }
                off[a] = -1;
                match grid.neighbor(node, &off) {
                    Some(nb) => (u[node] - u[nb]) / h,
                    None => 0.0,
                }
            })
            .collect()
    })
}

/// Half of the offsets with |o| <= MAX_OFFSET (lexicographically positive).
fn half_offsets(d: usize) -> Vec<Vec<isize>> {
    let mut out = Vec::new();
    let span = (2 * MAX_OFFSET + 1) as usize;
    let total = span.pow(d as u32);
    for code in 0..total {
        let mut c = code;
        let mut o = vec![0isize; d];
        for slot in o.iter_mut().rev() {
            *slot = (c % span) as isize - MAX_OFFSET;
            c /= span;
        }
        let r2: isize = o.iter().map(|x| x * x).sum();
        if r2 == 0 || r2 > MAX_OFFSET * MAX_OFFSET {
            continue;
        }
        if o.iter().find(|x| **x != 0).is_some_and(|x| *x > 0) {
            out.push(o);
        }
    }
    out
}

pub fn norm_c1alpha(u: &[f64], grid: &ChartGrid, alpha: f64, seed: u64) -> C1AlphaNorm {
    let d = grid.dim();
    let c0 = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let du = first_differences(u, grid);
    let c1 = du.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let offsets = half_offsets(d);
    let dists: Vec<f64> = offsets
        .iter()
        .map(|o| o.iter().enumerate().map(|(a, x)| (*x as f64 * grid.axis(a).h).powi(2)).sum::<f64>().sqrt())
        .collect();
    let total = grid.len() * offsets.len();
    let (stride, start, count) = if total > MAX_PAIRS {
        let stride = total.div_ceil(MAX_PAIRS);
        let start = ChaCha8Rng::seed_from_u64(seed).gen_range(0..stride);
        (stride, start, (total - start).div_ceil(stride))
    } else {
        (1, 0, total)
    };
    let m = offsets.len();
    let pair = |s: usize| -> (f64, f64) {
        let idx = start + s * stride;
        let (node, oi) = (idx / m, idx % m);
        match grid.neighbor(node, &offsets[oi]) {
            Some(nb) => {
                let w = dists[oi].powf(alpha);
                let dd = (0..d).map(|a| (du[node][a] - du[nb][a]).powi(2)).sum::<f64>().sqrt();
                ((u[node] - u[nb]).abs() / w, dd / w)
            }
            None => (0.0, 0.0),
        }
    };
    let qs = map_range(ExecPolicy::default(), count, pair);
    let (holder_u, holder_du) = qs.iter().fold((0.0f64, 0.0f64), |(a, b), (x, y)| (a.max(*x), b.max(*y)));
    C1AlphaNorm { c0, c1, holder_du, holder_u, pairs_scanned: count, subsampled: stride > 1, norm: c0 + c1 + holder_du }
}

/// Max over nodes with |t| < eps/4 of the central second difference in t
/// (the last axis).
pub fn second_t_derivative_sup(u: &[f64], grid: &ChartGrid, eps: f64) -> Result<f64, SolverError> {
    let ta = grid.dim() - 1;
    let ax = grid.axis(ta);
    if ax.kind != AxisKind::Periodic {
        return Err(SolverError::Invalid("last axis is not a circle".into()));
    }
    let window: Vec<usize> = (0..ax.n).filter(|&j| ax.coord(j).abs() < 0.25 * eps).collect();
    if window.len() < 3 {
        return Err(SolverError::Invalid(format!("only {} t-nodes with |t| < eps/4", window.len())));
    }
    let h2 = ax.h * ax.h;
    let d = grid.dim();
    let mut up = vec![0isize; d];
    up[ta] = 1;
    let mut down = vec![0isize; d];
    down[ta] = -1;
    let mut sup: f64 = 0.0;
    for node in 0..grid.len() {
        if !window.contains(&grid.index_along(node, ta)) {
            continue;
        }
        let p = grid.neighbor(node, &up).expect("periodic");
        let m = grid.neighbor(node, &down).expect("periodic");
        sup = sup.max(((u[p] - 2.0 * u[node] + u[m]) / h2).abs());
    }
    Ok(sup)
}

/// |central second difference in t| at t = 0 for every X node, maxed.
pub fn second_t_derivative_at_zero(u: &[f64], grid: &ChartGrid) -> f64 {
    let ta = grid.dim() - 1;
    let ax = grid.axis(ta);
    let j0 = ax.n / 2;
    let d = grid.dim();
    let mut up = vec![0isize; d];
    up[ta] = 1;
    let mut down = vec![0isize; d];
    down[ta] = -1;
    (0..grid.len())
        .filter(|&n| grid.index_along(n, ta) == j0)
        .map(|n| {
            let p = grid.neighbor(n, &up).expect("periodic");
            let m = grid.neighbor(n, &down).expect("periodic");
            ((u[p] - 2.0 * u[n] + u[m]) / (ax.h * ax.h)).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Axis;
    use std::f64::consts::PI;

    #[test]
    fn zero_and_constant() {
        let g = ChartGrid::new(vec![Axis::periodic(0.0, 1.0, 16), Axis::periodic(0.0, 1.0, 16)]).unwrap();
        assert_eq!(norm_c1alpha(&vec![0.0; 256], &g, 0.5, 0).norm, 0.0);
        assert_eq!(norm_c1alpha(&vec![-2.5; 256], &g, 0.5, 0).norm, 2.5);
    }

    #[test]
    fn ramp_pattern() {
        let n = 33;
        let h = 1.0 / (n - 1) as f64;
        let g = ChartGrid::new(vec![Axis::line(0.0, 1.0, n)]).unwrap();
        let slope = 3.0;
        let u: Vec<f64> = (0..n).map(|i| slope * i as f64 * h).collect();
        let r = norm_c1alpha(&u, &g, 0.5, 0);
        assert!((r.c0 - 3.0).abs() < 1e-12);
        assert!((r.c1 - slope).abs() < 1e-12);
        assert!(r.holder_du < 1e-9);
        assert!((r.holder_u - slope * (8.0 * h).powf(0.5)).abs() < 1e-12);
        assert!((r.norm - (3.0 + slope)).abs() < 1e-9);
    }

    #[test]
    fn subsampling_is_deterministic() {
        let g = ChartGrid::new(vec![Axis::periodic(0.0, 1.0, 64), Axis::periodic(0.0, 1.0, 64)])
            .unwrap()
            .with_circle(1.0, 16)
            .unwrap();
        let u: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.01).sin()).collect();
        let a = norm_c1alpha(&u, &g, 0.5, 7);
        let b = norm_c1alpha(&u, &g, 0.5, 7);
        assert!(a.subsampled);
        assert!(a.pairs_scanned <= MAX_PAIRS);
        assert_eq!(a, b);
    }

    #[test]
    fn tt_sup_of_cosine() {
        let g = ChartGrid::new(vec![Axis::periodic(0.0, 1.0, 8)]).unwrap().with_circle(2.0 * PI, 256).unwrap();
        let u: Vec<f64> = (0..g.len()).map(|i| g.coords(i)[1].cos()).collect();
        let s = second_t_derivative_sup(&u, &g, 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-3);
        let flat = vec![1.0; g.len()];
        assert_eq!(second_t_derivative_sup(&flat, &g, 1.0).unwrap(), 0.0);
        assert!(second_t_derivative_sup(&u, &g, 0.05).is_err());
        assert!((second_t_derivative_at_zero(&u, &g) - 1.0).abs() < 1e-3);
    }
}
