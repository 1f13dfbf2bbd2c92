use crate::dsl::MetricSpec;
use crate::par::{try_map_range, ExecPolicy};

use super::grid::ChartGrid;
use super::metric::{metric_at, Christoffel, PointMetric};
use super::GeometryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum StencilOrder {
    #[default]
    Second,
    Fourth,
}

impl StencilOrder {
    pub fn from_int(order: u32) -> Option<StencilOrder> {
        match order {
            2 => Some(StencilOrder::Second),
            4 => Some(StencilOrder::Fourth),
            _ => None,
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            StencilOrder::Second => 2,
            StencilOrder::Fourth => 4,
        }
    }
}

/// 1-D central first-derivative weights (offset, weight).
pub fn first_weights(h: f64, order: StencilOrder) -> Vec<(isize, f64)> {
    match order {
        StencilOrder::Second => vec![(-1, -0.5 / h), (1, 0.5 / h)],
        StencilOrder::Fourth => {
            let c = 1.0 / (12.0 * h);
            vec![(-2, c), (-1, -8.0 * c), (1, 8.0 * c), (2, -c)]
        }
    }
}

/// 1-D central second-derivative weights.
pub fn second_weights(h: f64, order: StencilOrder) -> Vec<(isize, f64)> {
    let h2 = h * h;
    match order {
        StencilOrder::Second => vec![(-1, 1.0 / h2), (0, -2.0 / h2), (1, 1.0 / h2)],
        StencilOrder::Fourth => {
            let c = 1.0 / (12.0 * h2);
            vec![(-2, -c), (-1, 16.0 * c), (0, -30.0 * c), (1, 16.0 * c), (2, -c)]
        }
    }
}

/// A multi-dimensional stencil: (per-axis offsets, weight).
pub type Stencil = Vec<(Vec<isize>, f64)>;

pub fn first_stencil(grid: &ChartGrid, a: usize, order: StencilOrder) -> Stencil {
    let d = grid.dim();
    first_weights(grid.axis(a).h, order)
        .into_iter()
        .map(|(o, w)| {
            let mut off = vec![0; d];
            off[a] = o;
            (off, w)
        })
        .collect()
}

pub fn second_stencil(grid: &ChartGrid, a: usize, b: usize, order: StencilOrder) -> Stencil {
    let d = grid.dim();
    if a == b {
        return second_weights(grid.axis(a).h, order)
            .into_iter()
            .map(|(o, w)| {
                let mut off = vec![0; d];
                off[a] = o;
                (off, w)
            })
            .collect();
    }
    let wa = first_weights(grid.axis(a).h, order);
    let wb = first_weights(grid.axis(b).h, order);
    let mut out = Vec::with_capacity(wa.len() * wb.len());
    for (oa, xa) in &wa {
        for (ob, xb) in &wb {
            let mut off = vec![0; d];
            off[a] = *oa;
            off[b] = *ob;
            out.push((off, xa * xb));
        }
    }
    out
}

pub fn apply_stencil(grid: &ChartGrid, u: &[f64], node: usize, st: &Stencil, axis: usize) -> Result<f64, GeometryError> {
    let mut s = 0.0;
    for (off, w) in st {
        let nb = grid.neighbor(node, off).ok_or(GeometryError::StencilOutOfDomain { axis, node })?;
        s += w * u[nb];
    }
    Ok(s)
}

/// Precomputed first and second derivative stencils of a grid.
#[derive(Debug, Clone)]
pub struct Stencils {
    pub first: Vec<Stencil>,
    /// `second[a * d + b]`.
    pub second: Vec<Stencil>,
    pub dim: usize,
}

impl Stencils {
    pub fn new(grid: &ChartGrid, order: StencilOrder) -> Stencils {
        let d = grid.dim();
        let first = (0..d).map(|a| first_stencil(grid, a, order)).collect();
        let second = (0..d * d).map(|ab| second_stencil(grid, ab / d, ab % d, order)).collect();
        Stencils { first, second, dim: d }
    }

    /// Finite-difference gradient and (row-major) Hessian of `u` at `node`.
    pub fn derivatives(&self, grid: &ChartGrid, u: &[f64], node: usize) -> Result<(Vec<f64>, Vec<f64>), GeometryError> {
        let d = self.dim;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        for a in 0..d {
            grad[a] = apply_stencil(grid, u, node, &self.first[a], a)?;
            for b in a..d {
                let v = apply_stencil(grid, u, node, &self.second[a * d + b], a)?;
                hess[a * d + b] = v;
                hess[b * d + a] = v;
            }
        }
        Ok((grad, hess))
    }
}

/// V^i V^j (d_ij u - Gamma^k_ij d_k u) from derivative data.
pub fn covariant_hessian_vv_pointwise(ch: &Christoffel, grad: &[f64], hess: &[f64], v: &[f64]) -> f64 {
    let n = ch.n;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut h = hess[i * n + j];
            for k in 0..n {
                h -= ch.get(k, i, j) * grad[k];
            }
            s += v[i] * v[j] * h;
        }
    }
    s
}

/// g^ij (d_ij u - Gamma^k_ij d_k u) from derivative data.
pub fn laplace_pointwise(pm: &PointMetric, ch: &Christoffel, grad: &[f64], hess: &[f64]) -> f64 {
    let n = pm.n;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut h = hess[i * n + j];
            for k in 0..n {
                h -= ch.get(k, i, j) * grad[k];
            }
            s += pm.ginv[(i, j)] * h;
        }
    }
    s
}

fn check_dims(spec: &MetricSpec, grid: &ChartGrid, u: &[f64]) -> Result<(), GeometryError> {
    if spec.dim() != grid.dim() || u.len() != grid.len() {
        return Err(GeometryError::Grid("field, grid and metric dimensions disagree".into()));
    }
    Ok(())
}

/// Laplace-Beltrami of a grid field, node by node.
pub fn laplace_beltrami(spec: &MetricSpec, grid: &ChartGrid, u: &[f64], order: StencilOrder) -> Result<Vec<f64>, GeometryError> {
    check_dims(spec, grid, u)?;
    let st = Stencils::new(grid, order);
    try_map_range(ExecPolicy::default(), grid.len(), |node| {
        let pm = metric_at(spec, &grid.coords(node))?;
        let ch = pm.christoffel();
        let (g, h) = st.derivatives(grid, u, node)?;
        Ok(laplace_pointwise(&pm, &ch, &g, &h))
    })
}

/// Hess u (V, V) with V given per node (coordinate components).
pub fn covariant_hessian_vv(
    spec: &MetricSpec,
    grid: &ChartGrid,
    u: &[f64],
    v: &[Vec<f64>],
    order: StencilOrder,
) -> Result<Vec<f64>, GeometryError> {
    check_dims(spec, grid, u)?;
    let st = Stencils::new(grid, order);
    try_map_range(ExecPolicy::default(), grid.len(), |node| {
        let pm = metric_at(spec, &grid.coords(node))?;
        let ch = pm.christoffel();
        let (g, h) = st.derivatives(grid, u, node)?;
        Ok(covariant_hessian_vv_pointwise(&ch, &g, &h, &v[node]))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_metric_spec;
    use crate::geometry::grid::Axis;
    use std::f64::consts::PI;

    fn sphere_spec() -> MetricSpec {
        parse_metric_spec(
            r#"{"coords":["theta","phi"],
                "topology":{"theta":{"kind":"polar","partner":"phi"},"phi":{"kind":"periodic","period":6.283185307179586}},
                "components":{"theta,theta":"1","phi,phi":"sin(theta)^2"}}"#,
        )
        .unwrap()
    }

    fn sphere_grid(n: usize) -> ChartGrid {
        ChartGrid::new(vec![Axis::polar(1, n), Axis::periodic(0.0, 2.0 * PI, n)]).unwrap()
    }

    fn laplace_error(n: usize, order: StencilOrder) -> f64 {
        let grid = sphere_grid(n);
        // u = cos(theta) is l = 1, so Lap u = -2 u. Non-zonal fields lose an
        // order at the pole rows through the 1/sin^2 factor.
        let u: Vec<f64> = (0..grid.len()).map(|i| grid.coords(i)[0].cos()).collect();
        let lap = laplace_beltrami(&sphere_spec(), &grid, &u, order).unwrap();
        lap.iter().zip(&u).map(|(l, u)| (l + 2.0 * u).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn sphere_laplacian_second_order() {
        let e1 = laplace_error(16, StencilOrder::Second);
        let e2 = laplace_error(32, StencilOrder::Second);
        let ratio = e1 / e2;
        assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn sphere_laplacian_fourth_order_is_more_accurate() {
        assert!(laplace_error(32, StencilOrder::Fourth) < 0.1 * laplace_error(32, StencilOrder::Second));
    }

    #[test]
    fn flat_hessian_of_quadratic_is_exact() {
        let spec = parse_metric_spec(
            r#"{"coords":["x","y"],"topology":{"x":{"kind":"line"},"y":{"kind":"line"}},"components":{"x,x":"1","y,y":"1"}}"#,
        )
        .unwrap();
        let grid = ChartGrid::new(vec![Axis::line(-1.0, 1.0, 9), Axis::line(-1.0, 1.0, 9)]).unwrap();
        let u: Vec<f64> = (0..grid.len()).map(|i| {
            let c = grid.coords(i);
            c[0] * c[1] + c[0] * c[0]
        }).collect();
        let st = Stencils::new(&grid, StencilOrder::Second);
        let node = grid.flat_index(&[4, 4]);
        let (_, h) = st.derivatives(&grid, &u, node).unwrap();
        assert!((h[0] - 2.0).abs() < 1e-12 && (h[1] - 1.0).abs() < 1e-12 && h[3].abs() < 1e-12);
        let v = vec![vec![1.0, 1.0]; grid.len()];
        // Hess(V,V) = 2 + 2*1 = 4 wherever the stencil fits; edges fail
        assert!(covariant_hessian_vv(&spec, &grid, &u, &v, StencilOrder::Second).is_err());
        let pm = metric_at(&spec, &[0.0, 0.0]).unwrap();
        let (g, h) = st.derivatives(&grid, &u, node).unwrap();
        assert!((covariant_hessian_vv_pointwise(&pm.christoffel(), &g, &h, &[1.0, 1.0]) - 4.0).abs() < 1e-12);
    }
}
