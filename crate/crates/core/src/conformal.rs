//! Conformal change of scalar curvature: the pointwise law, its two-slice
//! chain through the Gauss equation, and the Hermitian compatibility check.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dsl::{CompiledExpr, Expr, Jet2, MetricSpec};
use crate::geometry::{metric_at, scalar_curvature, Christoffel, GeometryError, PointMetric};
use crate::hypersurface::{extrinsic_at, HypersurfaceData, SliceChain};

/// Gradient and Hessian of `phi` in the first `m` coordinates of its jet.
struct PhiJet {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl PhiJet {
    fn truncate(j: &Jet2, m: usize) -> PhiJet {
        let grad = j.grad[..m].to_vec();
        let hess = (0..m * m).map(|ij| j.h(ij / m, ij % m)).collect();
        PhiJet { value: j.value, grad, hess }
    }

    fn hess_cov(&self, ch: &Christoffel, i: usize, j: usize) -> f64 {
        let m = self.grad.len();
        let mut h = self.hess[i * m + j];
        for k in 0..m {
            h -= ch.get(k, i, j) * self.grad[k];
        }
        h
    }

    fn laplace(&self, pm: &PointMetric, ch: &Christoffel) -> f64 {
        let m = self.grad.len();
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += pm.ginv[(i, j)] * self.hess_cov(ch, i, j);
            }
        }
        s
    }

    fn grad_sq(&self, pm: &PointMetric) -> f64 {
        let m = self.grad.len();
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += pm.ginv[(i, j)] * self.grad[i] * self.grad[j];
            }
        }
        s
    }

    fn hess_vv(&self, ch: &Christoffel, v: &[f64]) -> f64 {
        let m = self.grad.len();
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += v[i] * v[j] * self.hess_cov(ch, i, j);
            }
        }
        s
    }

    fn dv(&self, v: &[f64]) -> f64 {
        self.grad.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// e^{-2 phi} (R - 2(d-1) Lap phi - (d-1)(d-2) |grad phi|^2) in dimension d.
pub fn conformal_scalar_law(spec: &MetricSpec, phi: &Expr, point: &[f64]) -> Result<f64, GeometryError> {
    let d = spec.dim();
    let pj = CompiledExpr::new(phi, spec.coords())?.eval_jet2(point)?;
    let pm = metric_at(spec, point)?;
    let ch = pm.christoffel();
    let r = crate::geometry::curvature(&pm, &ch).scalar;
    let p = PhiJet::truncate(&pj, d);
    let df = (d - 1) as f64;
    Ok((-2.0 * p.value).exp() * (r - 2.0 * df * p.laplace(&pm, &ch) - df * (d as f64 - 2.0) * p.grad_sq(&pm)))
}

/// Scalar curvature of e^{2 phi} g computed from the transformed expressions.
pub fn conformal_scalar_direct(spec: &MetricSpec, phi: &Expr, point: &[f64]) -> Result<f64, GeometryError> {
    scalar_curvature(&spec.conformal(phi)?, point)
}

/// Transformed Gauss-equation pieces of one hypersurface, all scaled by e^{2 phi}:
/// (R~, Ric~(nu~, nu~), h~^2 - |A~|^2) times e^{2 phi}.
fn transformed_pieces(s: &HypersurfaceData, p: &PhiJet) -> (f64, f64, f64) {
    let pm = &s.ambient;
    let ch = pm.christoffel();
    let m = pm.n as f64;
    let lap = p.laplace(pm, &ch);
    let g2 = p.grad_sq(pm);
    let nphi = p.dv(&s.normal);
    let r = s.curvature.scalar - 2.0 * (m - 1.0) * lap - (m - 1.0) * (m - 2.0) * g2;
    let ric = s.ric_nn - (m - 2.0) * (p.hess_vv(&ch, &s.normal) - nphi * nphi) - lap - (m - 2.0) * g2;
    let ext = s.h * s.h - s.a_norm_sq + 2.0 * (m - 2.0) * s.h * nphi + (m - 1.0) * (m - 2.0) * nphi * nphi;
    (r, ric, ext)
}

/// R of e^{2 phi} g on X assembled from the untransformed extrinsic data of
/// the last two slices and the derivatives of phi, through the conformal
/// transformation rules for R, Ric, A and h.
pub fn conformal_chain_prediction(chain: &SliceChain, phi: &Expr, x: &[f64]) -> Result<f64, GeometryError> {
    if chain.k() < 2 {
        return Err(GeometryError::Degenerate("chain prediction needs two slices".into()));
    }
    let ext = extrinsic_at(chain, x)?;
    let full = chain.full();
    let pj = CompiledExpr::new(phi, full.coords())?.eval_jet2(&chain.lift(x, chain.k()))?;
    let top = &ext.level(2).surface;
    let mid = &ext.level(1).surface;
    let d = chain.x_dim();
    let (r_top, ric_top, ext_top) = transformed_pieces(top, &PhiJet::truncate(&pj, d + 2));
    let (_, ric_mid, ext_mid) = transformed_pieces(mid, &PhiJet::truncate(&pj, d + 1));
    Ok((-2.0 * pj.value).exp() * (r_top - 2.0 * ric_mid - 2.0 * ric_top + ext_top + ext_mid))
}

#[derive(Debug, Clone, Serialize)]
pub struct HermitianReport {
    /// max |J^T g J - g| over samples.
    pub deviation: f64,
    /// Same for e^{2 phi} g.
    pub conformal_deviation: f64,
    /// max |dev(e^{2 phi} g) - e^{2 phi} dev(g)|, zero up to rounding.
    pub invariance_gap: f64,
    pub compatible: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HermitianError {
    #[error("J must be a square block of the metric dimension with J^2 = -I")]
    NotComplex,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub fn hermitian_compatibility(
    j: &DMatrix<f64>,
    spec: &MetricSpec,
    phi: &Expr,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<HermitianReport, HermitianError> {
    let n = spec.dim();
    if j.nrows() != n || j.ncols() != n || n % 2 != 0 {
        return Err(HermitianError::NotComplex);
    }
    let j2 = j * j + DMatrix::<f64>::identity(n, n);
    if j2.amax() > 1e-12 {
        return Err(HermitianError::NotComplex);
    }
    let conf = spec.conformal(phi).map_err(GeometryError::from)?;
    let mut dev: f64 = 0.0;
    let mut cdev: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for p in points {
        let g = DMatrix::from_row_slice(n, n, &spec.eval_matrix(p).map_err(GeometryError::from)?);
        let gc = DMatrix::from_row_slice(n, n, &conf.eval_matrix(p).map_err(GeometryError::from)?);
        let d0 = j.transpose() * &g * j - &g;
        let d1 = j.transpose() * &gc * j - &gc;
        let scale = gc[(0, 0)] / g[(0, 0)];
        dev = dev.max(d0.amax());
        cdev = cdev.max(d1.amax());
        gap = gap.max((d1 - d0 * scale).amax());
    }
    Ok(HermitianReport { deviation: dev, conformal_deviation: cdev, invariance_gap: gap, compatible: dev <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_expression, parse_metric_spec};

    fn sphere() -> MetricSpec {
        parse_metric_spec(
            r#"{"coords":["theta","phi"],
                "topology":{"theta":{"kind":"polar","partner":"phi"},"phi":{"kind":"periodic","period":6.283185307179586}},
                "components":{"theta,theta":"1","phi,phi":"sin(theta)^2"}}"#,
        )
        .unwrap()
    }

    #[test]
    fn law_trivial_cases() {
        let s = sphere();
        let p = [0.9, 0.3];
        assert!((conformal_scalar_law(&s, &parse_expression("0").unwrap(), &p).unwrap() - 2.0).abs() < 1e-13);
        let c = conformal_scalar_law(&s, &parse_expression("0.4").unwrap(), &p).unwrap();
        assert!((c - 2.0 * (-0.8f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn law_matches_direct_on_sphere() {
        let s = sphere();
        let phi = parse_expression("0.3*cos(theta) + 0.2*sin(theta)*sin(phi)").unwrap();
        for p in [[0.4, 1.0], [1.6, 2.5], [2.8, -0.7]] {
            let a = conformal_scalar_law(&s, &phi, &p).unwrap();
            let b = conformal_scalar_direct(&s, &phi, &p).unwrap();
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn chain_matches_direct() {
        let s = parse_metric_spec(
            r#"{"coords":["x","y","zeta","xi"],"flat":["zeta","xi"],"params":{"a":3},
                "topology":{"x":{"kind":"periodic","period":6.283185307179586},"y":{"kind":"periodic","period":6.283185307179586}},
                "components":{"x,x":"1","y,y":"1","zeta,zeta":"a","xi,xi":"a","x,zeta":"0.1*sin(y)",
                              "zeta,xi":"1/((1+exp(-xi))*(1+exp(-zeta)))"}}"#,
        )
        .unwrap();
        let phi = parse_expression("0.2*sin(x)*cos(y) + 0.1*zeta - 0.3*xi*zeta + 0.05*xi^2").unwrap();
        let chain = SliceChain::standard(&s).unwrap();
        let conf = SliceChain::standard(&s.conformal(&phi).unwrap()).unwrap();
        for x in [[0.3, 1.1], [2.0, -0.5]] {
            let pred = conformal_chain_prediction(&chain, &phi, &x).unwrap();
            let direct = crate::geometry::scalar_curvature(conf.x_spec(), &x).unwrap();
            assert!((pred - direct).abs() < 1e-10, "{pred} vs {direct}");
        }
    }

    #[test]
    fn hermitian_flat_and_negative() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let flat = parse_metric_spec(r#"{"coords":["x","y"],"components":{"x,x":"1","y,y":"1"}}"#).unwrap();
        let phi = parse_expression("sin(x)*y").unwrap();
        let pts = vec![vec![0.1, 0.2], vec![1.0, -2.0]];
        let r = hermitian_compatibility(&j, &flat, &phi, &pts, 1e-12).unwrap();
        assert!(r.compatible && r.conformal_deviation <= 1e-12 && r.invariance_gap <= 1e-12);
        let bad = parse_metric_spec(r#"{"coords":["x","y"],"components":{"x,x":"2","y,y":"1"}}"#).unwrap();
        assert!(!hermitian_compatibility(&j, &bad, &phi, &pts, 1e-12).unwrap().compatible);
        let not_j = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(hermitian_compatibility(&not_j, &flat, &phi, &pts, 1e-12), Err(HermitianError::NotComplex)));
    }
}
