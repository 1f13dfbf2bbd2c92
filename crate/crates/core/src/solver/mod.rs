//! The elliptic stage: bump inhomogeneity, operator assembly, Krylov solve
//! and the norms the conformal construction checks.

pub mod bump;
pub mod norms;
pub mod operator;
pub mod sparse;
pub mod yamabe;

pub use bump::{build_bump, choose_epsilon, smooth_step, BumpSpec, EpsilonChoice};
pub use norms::{norm_c1alpha, second_t_derivative_at_zero, second_t_derivative_sup, C1AlphaNorm};
pub use operator::{assemble, pde_coefficients, CoefField, DiscreteOperator, NodeCoefficients};
pub use sparse::{bicgstab, CsrMatrix, Ilu0, KrylovConfig, KrylovOutcome};
pub use yamabe::{spectrum_lower_bound, yamabe_quotient, SpectrumEstimate};

use serde::Serialize;

use crate::geometry::GeometryError;
use crate::par::ExecPolicy;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("grid has a non-compact axis; the solver needs a closed manifold")]
    NonCompact,
    #[error("support half-width {eps:.3e} is below the resolvable minimum {min:.3e}")]
    Unresolvable { eps: f64, min: f64 },
    #[error("no convergence after {iterations} iterations (best relative residual {best_residual:.3e})")]
    NotConverged { iterations: usize, best_residual: f64 },
    #[error("Krylov breakdown at iteration {iterations} (best relative residual {best_residual:.3e})")]
    Breakdown { iterations: usize, best_residual: f64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("ellipticity certificate failed (min symbol eigenvalue {min_eigenvalue:.3e})")]
    NotElliptic { min_eigenvalue: f64 },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub krylov: KrylovConfig,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { krylov: KrylovConfig::default(), alpha: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub u: Vec<f64>,
    pub relative_residual: f64,
    pub iterations: usize,
    pub c0: f64,
    pub c1alpha: C1AlphaNorm,
    pub min_u: f64,
    pub max_u: f64,
}

pub fn solve(op: &DiscreteOperator, f: &[f64], cfg: &SolverConfig) -> Result<SolveReport, SolverError> {
    solve_with(op, f, cfg, ExecPolicy::default())
}

pub fn solve_with(op: &DiscreteOperator, f: &[f64], cfg: &SolverConfig, policy: ExecPolicy) -> Result<SolveReport, SolverError> {
    if f.len() != op.matrix.n {
        return Err(SolverError::Invalid("right-hand side does not match the grid".into()));
    }
    let pre = Ilu0::new(&op.matrix)?;
    let out = bicgstab(&op.matrix, &pre, f, None, cfg.krylov, policy)?;
    let u = out.x;
    let c1alpha = norm_c1alpha(&u, &op.grid, cfg.alpha, cfg.seed);
    let min_u = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_u = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(SolveReport {
        relative_residual: out.relative_residual,
        iterations: out.iterations,
        c0: c1alpha.c0,
        c1alpha,
        min_u,
        max_u,
        u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Axis, ChartGrid, StencilOrder};
    use std::f64::consts::PI;

    fn laplace_op(n: usize, c: f64) -> DiscreteOperator {
        let g = ChartGrid::new(vec![Axis::periodic(0.0, 2.0 * PI, n), Axis::periodic(0.0, 2.0 * PI, n)])
            .unwrap()
            .with_circle(2.0 * PI, n)
            .unwrap();
        let mut a = vec![0.0; 9];
        a[0] = -4.0;
        a[4] = -4.0;
        a[8] = -4.0;
        assemble(&g, StencilOrder::Second, |_| Ok(NodeCoefficients { a: a.clone(), b: vec![0.0; 3], c }), vec![]).unwrap()
    }

    #[test]
    fn zero_and_constant_data() {
        let op = laplace_op(8, 2.0);
        let cfg = SolverConfig::default();
        let r = solve(&op, &vec![0.0; op.matrix.n], &cfg).unwrap();
        assert!(r.u.iter().all(|v| *v == 0.0));
        let r = solve(&op, &op.potential.clone(), &cfg).unwrap();
        assert!(r.u.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn policies_agree() {
        let op = laplace_op(8, 1.0);
        let f: Vec<f64> = (0..op.matrix.n).map(|i| ((i * 37) % 11) as f64).collect();
        let cfg = SolverConfig::default();
        let a = solve_with(&op, &f, &cfg, ExecPolicy::Sequential).unwrap();
        let b = solve_with(&op, &f, &cfg, ExecPolicy::Parallel).unwrap();
        assert_eq!(a.u, b.u);
    }
}
