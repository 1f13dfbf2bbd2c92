//! Assembly of second-order operators
//! L u = a^ij d_ij u + b^k d_k u + c u on a compact grid.

use crate::geometry::stencil::Stencil;
use crate::geometry::{ChartGrid, Christoffel, GeometryError, PointMetric, StencilOrder, Stencils};
use crate::par::{try_map_range, ExecPolicy};

use super::SolverError;

/// Coefficients at one node; `a` is full row-major and symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl NodeCoefficients {
    /// Applies the continuous operator to derivative data.
    pub fn apply(&self, u: f64, grad: &[f64], hess: &[f64]) -> f64 {
        let d = self.b.len();
        let mut s = self.c * u;
        for i in 0..d {
            s += self.b[i] * grad[i];
            for j in 0..d {
                s += self.a[i * d + j] * hess[i * d + j];
            }
        }
        s
    }
}

/// A tangent field on X with its coefficient in front of nabla_V nabla_V.
#[derive(Debug, Clone)]
pub struct CoefField {
    pub coef: f64,
    pub v: Vec<f64>,
}

/// sum_j c_j nabla_{V_j} nabla_{V_j} - 4 Lap + potential on X x S^1 with the
/// product metric g_X + dt^2, at a point of X.
pub fn pde_coefficients(gx: &PointMetric, ch: &Christoffel, fields: &[CoefField], potential: f64) -> NodeCoefficients {
    let d = gx.n;
    let w = d + 1;
    let mut a = vec![0.0; w * w];
    for i in 0..d {
        for j in 0..d {
            let mut s = -4.0 * gx.ginv[(i, j)];
            for f in fields {
                s += f.coef * f.v[i] * f.v[j];
            }
            a[i * w + j] = s;
        }
    }
    a[w * w - 1] = -4.0;
    let mut b = vec![0.0; w];
    for (k, bk) in b.iter_mut().enumerate().take(d) {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s -= a[i * w + j] * ch.get(k, i, j);
            }
        }
        *bk = s;
    }
    NodeCoefficients { a, b, c: potential }
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub matrix: super::CsrMatrix,
    pub grid: ChartGrid,
    /// Zeroth-order coefficient per node.
    pub potential: Vec<f64>,
    pub order: StencilOrder,
    /// Names of the terms that contributed to the rows.
    pub terms: Vec<String>,
}

/// Assembles the operator. `coeffs(node)` supplies the coefficients of every
/// node; mixed pairs are stencilled wherever any node needs them so that the
/// row pattern stays symmetric.
pub fn assemble<F>(grid: &ChartGrid, order: StencilOrder, coeffs: F, terms: Vec<String>) -> Result<DiscreteOperator, SolverError>
where
    F: Fn(usize) -> Result<NodeCoefficients, SolverError> + Sync + Send,
{
    if !grid.is_compact() {
        return Err(SolverError::NonCompact);
    }
    let d = grid.dim();
    let policy = ExecPolicy::default();
    let all = try_map_range(policy, grid.len(), &coeffs)?;
    let mut mixed = vec![false; d * d];
    for nc in &all {
        for i in 0..d {
            for j in i + 1..d {
                if nc.a[i * d + j] != 0.0 {
                    mixed[i * d + j] = true;
                }
            }
        }
    }
    let st = Stencils::new(grid, order);
    let rows = try_map_range(policy, grid.len(), |node| {
        let nc = &all[node];
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(64);
        let mut push = |stencil: &Stencil, w: f64, axis: usize| -> Result<(), SolverError> {
            for (off, s) in stencil {
                let nb = grid
                    .neighbor(node, off)
                    .ok_or(SolverError::Geometry(GeometryError::StencilOutOfDomain { axis, node }))?;
                row.push((nb, w * s));
            }
            Ok(())
        };
        for i in 0..d {
            push(&st.second[i * d + i], nc.a[i * d + i], i)?;
            push(&st.first[i], nc.b[i], i)?;
            for j in i + 1..d {
                if mixed[i * d + j] {
                    push(&st.second[i * d + j], nc.a[i * d + j] + nc.a[j * d + i], i)?;
                }
            }
        }
        row.push((node, nc.c));
        Ok::<_, SolverError>(row)
    })?;
    let potential = all.iter().map(|nc| nc.c).collect();
    Ok(DiscreteOperator { matrix: super::CsrMatrix::from_rows(rows), grid: grid.clone(), potential, order, terms })
}
