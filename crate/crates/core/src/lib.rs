//! Numerical toolkit for conformal positive-scalar-curvature constructions on
//! product manifolds X x R^k: closed-form metrics, curvature, slice geometry,
//! angle conditions, the elliptic PDE on X x S^1 and the final curvature check.

pub mod dsl;
pub mod geometry;
pub mod par;
pub mod hypersurface;
pub mod angle;
pub mod solver;
pub mod conformal;
pub mod pipeline;
pub mod registry;
