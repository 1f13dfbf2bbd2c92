//! Grids, pointwise metric data, finite-difference operators and quadrature.

pub mod grid;
pub mod metric;
pub mod quadrature;
pub mod stencil;

pub use grid::{Axis, AxisKind, ChartGrid, ScalarField, MIN_COMPACT_NODES};
pub use metric::{brioschi_k, curvature, metric_at, min_eigenvalue, scalar_curvature, spd_inverse, Christoffel, Curvature, PointMetric};
pub use quadrature::{axis_weights, integrate, integrate_weighted, lp_norm, volume, volume_weights, write_grid_csv};
pub use stencil::{laplace_beltrami, covariant_hessian_vv, StencilOrder, Stencils};

use crate::dsl::DslError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error("metric is not positive definite at {point:?} (smallest eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveDefinite { min_eigenvalue: f64, point: Vec<f64> },
    #[error("grid error: {0}")]
    Grid(String),
    #[error("stencil along axis {axis} leaves the domain at node {node}")]
    StencilOutOfDomain { axis: usize, node: usize },
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
}
