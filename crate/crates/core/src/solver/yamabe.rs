//! Yamabe quotient and the bottom of the conformal Laplacian spectrum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dsl::MetricSpec;
use crate::geometry::{metric_at, volume_weights, ChartGrid, StencilOrder, Stencils};
use crate::par::{dot, try_map_range, ExecPolicy};

use super::operator::{assemble, NodeCoefficients};
use super::sparse::{bicgstab, Ilu0, KrylovConfig};
use super::SolverError;

fn dimension_factor(n: usize) -> Result<f64, SolverError> {
    if n < 3 {
        return Err(SolverError::Invalid(format!("the conformal Laplacian needs dimension >= 3, got {n}")));
    }
    Ok(4.0 * (n - 1) as f64 / (n - 2) as f64)
}

/// E(v) = (4(n-1)/(n-2) int |grad v|^2 + int R v^2) / (int |v|^{2n/(n-2)})^{(n-2)/n}.
pub fn yamabe_quotient(v: &[f64], spec: &MetricSpec, grid: &ChartGrid) -> Result<f64, SolverError> {
    let n = spec.dim();
    let cn = dimension_factor(n)?;
    if v.len() != grid.len() {
        return Err(SolverError::Invalid("field does not match the grid".into()));
    }
    let w = volume_weights(spec, grid)?;
    let st = Stencils::new(grid, StencilOrder::Second);
    let policy = ExecPolicy::default();
    let dens = try_map_range(policy, grid.len(), |node| {
        let pm = metric_at(spec, &grid.coords(node))?;
        let r = pm.curvature().scalar;
        let mut grad = vec![0.0; n];
        for (a, g) in grad.iter_mut().enumerate() {
            *g = crate::geometry::stencil::apply_stencil(grid, v, node, &st.first[a], a)?;
        }
        let mut g2 = 0.0;
        for a in 0..n {
            for b in 0..n {
                g2 += pm.ginv[(a, b)] * grad[a] * grad[b];
            }
        }
        Ok::<_, SolverError>((cn * g2 + r * v[node] * v[node], v[node].abs().powf(2.0 * n as f64 / (n - 2) as f64)))
    })?;
    let num = crate::par::sum_range(policy, grid.len(), |i| w[i] * dens[i].0);
    let den = crate::par::sum_range(policy, grid.len(), |i| w[i] * dens[i].1);
    if den == 0.0 {
        return Err(SolverError::Invalid("zero denominator: the test function vanishes".into()));
    }
    Ok(num / den.powf((n - 2) as f64 / n as f64))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectrumEstimate {
    pub lambda: f64,
    pub iterations: usize,
    pub change: f64,
}

/// Smallest eigenvalue of -4(n-1)/(n-2) Lap + R by inverse iteration; the
/// estimate is the Rayleigh quotient of the final iterate.
pub fn spectrum_lower_bound(spec: &MetricSpec, grid: &ChartGrid, seed: u64) -> Result<SpectrumEstimate, SolverError> {
    let n = spec.dim();
    let cn = dimension_factor(n)?;
    let op = assemble(
        grid,
        StencilOrder::Second,
        |node| {
            let pm = metric_at(spec, &grid.coords(node))?;
            let ch = pm.christoffel();
            let r = crate::geometry::curvature(&pm, &ch).scalar;
            let a: Vec<f64> = (0..n * n).map(|ij| -cn * pm.ginv[(ij / n, ij % n)]).collect();
            let b = (0..n)
                .map(|k| {
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            s -= a[i * n + j] * ch.get(k, i, j);
                        }
                    }
                    s
                })
                .collect();
            Ok(NodeCoefficients { a, b, c: r })
        },
        vec!["conformal-laplacian".into()],
    )?;
    let policy = ExecPolicy::default();
    let pre = Ilu0::new(&op.matrix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..grid.len()).map(|_| 1.0 + 0.1 * rng.gen_range(-1.0..1.0)).collect();
    let nrm = dot(policy, &x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);
    let rayleigh = |x: &[f64]| dot(policy, x, &op.matrix.matvec(policy, x)) / dot(policy, x, x);
    let mut lambda = rayleigh(&x);
    let mut change = f64::INFINITY;
    let mut it = 0;
    let cfg = KrylovConfig { tol: 1e-12, max_iter: 5000 };
    while it < 200 && change > 1e-12 * lambda.abs().max(1.0) {
        it += 1;
        let y = bicgstab(&op.matrix, &pre, &x, Some(&x), cfg, policy)?.x;
        let nrm = dot(policy, &y, &y).sqrt();
        x = y.into_iter().map(|v| v / nrm).collect();
        let l = rayleigh(&x);
        change = (l - lambda).abs();
        lambda = l;
    }
    Ok(SpectrumEstimate { lambda, iterations: it, change })
}
