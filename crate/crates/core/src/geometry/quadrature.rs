use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;

use crate::dsl::MetricSpec;
use crate::par::{try_map_range, ExecPolicy};

use super::grid::{Axis, AxisKind, ChartGrid};
use super::GeometryError;

/// Fejer first-rule weights on theta_j = (j + 1/2) pi / n, divided by
/// sin(theta_j): exact for sin(theta) times polynomials in cos(theta) of degree < n.
fn polar_weights(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let th = (j as f64 + 0.5) * PI / n as f64;
            let s: f64 = (1..=n / 2).map(|k| (2.0 * k as f64 * th).cos() / (4.0 * (k * k) as f64 - 1.0)).sum();
            (2.0 / n as f64) * (1.0 - 2.0 * s) / th.sin()
        })
        .collect()
}

/// Per-axis quadrature weights: trapezoid (spectral on periodic axes,
/// end-halved on lines), Fejer on polar axes.
pub fn axis_weights(ax: &Axis) -> Vec<f64> {
    match ax.kind {
        AxisKind::Periodic => vec![ax.h; ax.n],
        AxisKind::Line => {
            if ax.n == 1 {
                return vec![1.0];
            }
            let mut w = vec![ax.h; ax.n];
            w[0] *= 0.5;
            w[ax.n - 1] *= 0.5;
            w
        }
        AxisKind::Polar { .. } => polar_weights(ax.n),
    }
}

/// Node weights including sqrt(det g).
pub fn volume_weights(spec: &MetricSpec, grid: &ChartGrid) -> Result<Vec<f64>, GeometryError> {
    if spec.dim() != grid.dim() {
        return Err(GeometryError::Grid("metric and grid dimensions disagree".into()));
    }
    let aw: Vec<Vec<f64>> = grid.axes().iter().map(axis_weights).collect();
    let n = spec.dim();
    try_map_range(ExecPolicy::default(), grid.len(), |node| {
        let c = grid.coords(node);
        let g = DMatrix::from_vec(n, n, spec.eval_matrix(&c)?);
        let det = g.determinant();
        if !(det > 0.0) {
            return Err(GeometryError::NotPositiveDefinite { min_eigenvalue: super::metric::min_eigenvalue(&g), point: c });
        }
        let w: f64 = (0..grid.dim()).map(|a| aw[a][grid.index_along(node, a)]).product();
        Ok(w * det.sqrt())
    })
}

pub fn integrate(spec: &MetricSpec, grid: &ChartGrid, f: &[f64]) -> Result<f64, GeometryError> {
    let w = volume_weights(spec, grid)?;
    Ok(integrate_weighted(&w, f))
}

pub fn integrate_weighted(w: &[f64], f: &[f64]) -> f64 {
    crate::par::sum_range(ExecPolicy::default(), w.len(), |i| w[i] * f[i])
}

pub fn lp_norm(spec: &MetricSpec, grid: &ChartGrid, f: &[f64], p: f64) -> Result<f64, GeometryError> {
    let w = volume_weights(spec, grid)?;
    let fp: Vec<f64> = f.iter().map(|v| v.abs().powf(p)).collect();
    Ok(integrate_weighted(&w, &fp).powf(1.0 / p))
}

pub fn volume(spec: &MetricSpec, grid: &ChartGrid) -> Result<f64, GeometryError> {
    Ok(volume_weights(spec, grid)?.iter().sum())
}

/// CSV dump: one row per node with its coordinates followed by the named columns.
pub fn write_grid_csv<W: Write>(
    out: &mut W,
    grid: &ChartGrid,
    coord_names: &[String],
    columns: &[(&str, &[f64])],
) -> std::io::Result<()> {
    let mut header: Vec<String> = coord_names.to_vec();
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    writeln!(out, "{}", header.join(","))?;
    for node in 0..grid.len() {
        let mut row: Vec<String> = grid.coords(node).iter().map(|x| format!("{x}")).collect();
        row.extend(columns.iter().map(|(_, v)| format!("{}", v[node])));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_metric_spec;

    #[test]
    fn polar_weights_integrate_sine() {
        for n in [8, 16, 64] {
            let w = polar_weights(n);
            let s: f64 = (0..n).map(|j| w[j] * ((j as f64 + 0.5) * PI / n as f64).sin()).sum();
            assert!((s - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn sphere_area() {
        let spec = parse_metric_spec(
            r#"{"coords":["theta","phi"],
                "topology":{"theta":{"kind":"polar","partner":"phi"},"phi":{"kind":"periodic","period":6.283185307179586}},
                "components":{"theta,theta":"1","phi,phi":"sin(theta)^2"}}"#,
        )
        .unwrap();
        let grid = ChartGrid::from_topology(spec.topology(), &[64, 64]).unwrap();
        let area = volume(&spec, &grid).unwrap();
        assert!((area - 4.0 * PI).abs() < 1e-6, "{area}");
    }

    #[test]
    fn lp_norm_of_constant_on_torus() {
        let spec = parse_metric_spec(
            r#"{"coords":["x","y"],"topology":{"x":{"kind":"periodic","period":2},"y":{"kind":"periodic","period":3}},"components":{"x,x":"1","y,y":"1"}}"#,
        )
        .unwrap();
        let grid = ChartGrid::from_topology(spec.topology(), &[8, 8]).unwrap();
        let f = vec![2.0; grid.len()];
        let n = lp_norm(&spec, &grid, &f, 2.0).unwrap();
        assert!((n - (4.0f64 * 6.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let grid = ChartGrid::new(vec![Axis::periodic(0.0, 1.0, 8)]).unwrap();
        let v = vec![1.5; 8];
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &grid, &["x".to_string()], &[("u", &v)]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 9);
        assert_eq!(s.lines().next().unwrap(), "x,u");
        assert_eq!(s.lines().nth(1).unwrap(), "0,1.5");
    }
}
