//! Extrinsic geometry of the coordinate slice chain
//! X x R_1 x .. x R_k  ->  X x R_1 x .. x R_{k-1}  ->  ..  ->  X,
//! each step fixing the last flat coordinate.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dsl::MetricSpec;
use crate::geometry::{metric_at, spd_inverse, Curvature, GeometryError, PointMetric};

/// Below this induced norm a projected normal counts as vanishing.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// One fixed coordinate of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Slice {
    pub coord: String,
    pub value: f64,
}

/// Nested metrics `levels[j]` on X x R_1 x .. x R_j, for j = 0..=k.
#[derive(Debug, Clone)]
pub struct SliceChain {
    levels: Vec<MetricSpec>,
    /// `values[j]` is the fixed value of R_{j+1}.
    values: Vec<f64>,
}

impl SliceChain {
    /// All flat coordinates fixed at 0.
    pub fn standard(spec: &MetricSpec) -> Result<SliceChain, GeometryError> {
        SliceChain::at(spec, &vec![0.0; spec.k()])
    }

    pub fn at(spec: &MetricSpec, values: &[f64]) -> Result<SliceChain, GeometryError> {
        let k = spec.k();
        if k == 0 {
            return Err(GeometryError::Degenerate("metric has no flat factor to slice".into()));
        }
        if values.len() != k {
            return Err(GeometryError::Grid(format!("{} slice values for {k} flat factors", values.len())));
        }
        let mut levels = vec![spec.clone()];
        for j in (0..k).rev() {
            let top = levels.last().expect("non-empty");
            let next = induced_metric(top, &Slice { coord: top.coords()[top.dim() - 1].clone(), value: values[j] })?;
            levels.push(next);
        }
        levels.reverse();
        Ok(SliceChain { levels, values: values.to_vec() })
    }

    pub fn k(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn x_dim(&self) -> usize {
        self.levels[0].dim()
    }

    /// n = dim X + 1.
    pub fn n(&self) -> usize {
        self.x_dim() + 1
    }

    pub fn level(&self, j: usize) -> &MetricSpec {
        &self.levels[j]
    }

    pub fn x_spec(&self) -> &MetricSpec {
        &self.levels[0]
    }

    pub fn full(&self) -> &MetricSpec {
        &self.levels[self.k()]
    }

    pub fn slices(&self) -> Vec<Slice> {
        let full = self.full();
        (0..self.k())
            .rev()
            .map(|j| Slice { coord: full.coords()[self.x_dim() + j].clone(), value: self.values[j] })
            .collect()
    }

    /// Coordinates at level j of the point `x` of X.
    pub fn lift(&self, x: &[f64], j: usize) -> Vec<f64> {
        let mut p = x.to_vec();
        p.extend_from_slice(&self.values[..j]);
        p
    }
}

/// Metric on the coordinate hypersurface `slice.coord = slice.value`.
pub fn induced_metric(spec: &MetricSpec, slice: &Slice) -> Result<MetricSpec, GeometryError> {
    let idx = spec
        .coord_index(&slice.coord)
        .ok_or_else(|| GeometryError::Grid(format!("unknown coordinate '{}'", slice.coord)))?;
    Ok(spec.restrict(idx, slice.value)?)
}

/// Extrinsic data of the hypersurface "last coordinate = const" at one point.
#[derive(Debug, Clone)]
pub struct HypersurfaceData {
    pub ambient: PointMetric,
    pub curvature: Curvature,
    /// Unit normal in ambient coordinates.
    pub normal: Vec<f64>,
    /// Second fundamental form on the tangential coordinate frame.
    pub a: DMatrix<f64>,
    pub induced_inv: DMatrix<f64>,
    pub h: f64,
    pub a_norm_sq: f64,
    pub ric_nn: f64,
}

/// nu = g^{-1} e_f / sqrt(g^ff) for f the last coordinate, which makes
/// g(nu, d_f) = 1/sqrt(g^ff) > 0. A_ij = g(nabla_i nu, e_j) = -Gamma^f_ij / sqrt(g^ff).
pub fn hypersurface_at(spec: &MetricSpec, point: &[f64]) -> Result<HypersurfaceData, GeometryError> {
    let pm = metric_at(spec, point)?;
    let n = pm.n;
    let f = n - 1;
    let gff = pm.ginv[(f, f)];
    let s = gff.sqrt();
    let normal: Vec<f64> = (0..n).map(|a| pm.ginv[(a, f)] / s).collect();
    let ch = pm.christoffel();
    let curvature = crate::geometry::curvature(&pm, &ch);
    let a = DMatrix::from_fn(f, f, |i, j| -ch.get(f, i, j) / s);
    let induced = pm.g.view((0, 0), (f, f)).into_owned();
    let induced_inv = spd_inverse(&induced, point)?;
    let h = (&induced_inv * &a).trace();
    // |A|^2 = tr(g^-1 A g^-1 A)
    let m = &induced_inv * &a;
    let a_norm_sq = (&m * &m).trace();
    let ric_nn = curvature.ricci_vv(&normal);
    Ok(HypersurfaceData { ambient: pm, curvature, normal, a, induced_inv, h, a_norm_sq, ric_nn })
}

/// Per-level data at a point of X. Level j is the slice R_j = const inside
/// X x R_1 x .. x R_j.
#[derive(Debug, Clone)]
pub struct LevelData {
    pub j: usize,
    pub surface: HypersurfaceData,
    /// The normal with the R_2..R_j components dropped, a vector on X x R_1.
    pub projected: Vec<f64>,
    /// R_1 component of `projected`.
    pub coef: f64,
    /// X part of `projected`.
    pub v: Vec<f64>,
    /// |projected|^2 in the level-1 metric.
    pub projected_norm_sq: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct ExtrinsicData {
    pub x: Vec<f64>,
    /// `levels[j - 1]` for j = 1..=k.
    pub levels: Vec<LevelData>,
    /// Metric of X x R_1 at the point.
    pub g1: DMatrix<f64>,
    /// Metric of X at the point.
    pub gx: PointMetric,
    pub scalar_x: f64,
}

impl ExtrinsicData {
    pub fn k(&self) -> usize {
        self.levels.len()
    }

    pub fn x_dim(&self) -> usize {
        self.x.len()
    }

    pub fn level(&self, j: usize) -> &LevelData {
        &self.levels[j - 1]
    }

    /// Scalar curvature of the full metric at the point.
    pub fn scalar_full(&self) -> f64 {
        self.levels.last().expect("k >= 1").surface.curvature.scalar
    }

    /// g1(v, w).
    pub fn g1_dot(&self, v: &[f64], w: &[f64]) -> f64 {
        let m = self.g1.nrows();
        (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).map(|(a, b)| self.g1[(a, b)] * v[a] * w[b]).sum()
    }

    /// g_X(v, v).
    pub fn gx_norm_sq(&self, v: &[f64]) -> f64 {
        let m = self.gx.n;
        (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).map(|(a, b)| self.gx.g[(a, b)] * v[a] * v[b]).sum()
    }

    /// Two-slice naming: (dpi) nu_g = a d_zeta + V1.
    pub fn v1(&self) -> Option<&[f64]> {
        (self.k() >= 2).then(|| self.level(2).v.as_slice())
    }

    /// nu_{induced} = b d_zeta + V2.
    pub fn v2(&self) -> &[f64] {
        &self.level(1).v
    }

    /// |a - 1/g1(d_1, (dpi) nu)|, the gap between the literal coefficient and
    /// the reciprocal formula that presumes a unit projected normal.
    pub fn coefficient_gap(&self, j: usize) -> f64 {
        let lv = self.level(j);
        let mut d1 = vec![0.0; self.x_dim() + 1];
        d1[self.x_dim()] = 1.0;
        (lv.coef - 1.0 / self.g1_dot(&d1, &lv.projected)).abs()
    }
}

pub fn extrinsic_at(chain: &SliceChain, x: &[f64]) -> Result<ExtrinsicData, GeometryError> {
    let d = chain.x_dim();
    if x.len() != d {
        return Err(GeometryError::Grid(format!("point has {} coordinates, X has dimension {d}", x.len())));
    }
    let mut levels = Vec::with_capacity(chain.k());
    for j in 1..=chain.k() {
        let surface = hypersurface_at(chain.level(j), &chain.lift(x, j))?;
        let projected = surface.normal[..=d].to_vec();
        levels.push(LevelData {
            j,
            coef: projected[d],
            v: projected[..d].to_vec(),
            projected,
            surface,
            projected_norm_sq: 0.0,
            degenerate: false,
        });
    }
    let g1 = levels[0].surface.ambient.g.clone();
    let gx = metric_at(chain.x_spec(), x)?;
    let scalar_x = gx.curvature().scalar;
    let mut out = ExtrinsicData { x: x.to_vec(), levels, g1, gx, scalar_x };
    for j in 0..out.levels.len() {
        let p = out.levels[j].projected.clone();
        let ns = out.g1_dot(&p, &p);
        out.levels[j].projected_norm_sq = ns;
        out.levels[j].degenerate = ns.max(0.0).sqrt() < DEGENERACY_TOL;
    }
    Ok(out)
}

/// Unit normal of the slice `coord = value` in `spec` at `point` (a point of
/// the ambient chart). The fixed coordinate is moved last internally.
pub fn unit_normal(spec: &MetricSpec, coord: &str, point: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let f = spec.coord_index(coord).ok_or_else(|| GeometryError::Grid(format!("unknown coordinate '{coord}'")))?;
    let pm = metric_at(spec, point)?;
    let s = pm.ginv[(f, f)].sqrt();
    Ok((0..pm.n).map(|a| pm.ginv[(a, f)] / s).collect())
}

/// Pieces of the twice-applied Gauss equation on the last two slices.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GaussCodazziTerms {
    pub scalar_x: f64,
    pub scalar_top: f64,
    pub ric_top: f64,
    pub ric_mid: f64,
    pub h_top: f64,
    pub h_mid: f64,
    pub a_top_sq: f64,
    pub a_mid_sq: f64,
}

impl GaussCodazziTerms {
    /// R_top - 2 Ric_mid(nu, nu) - 2 Ric_top(nu, nu) + h_top^2 + h_mid^2 - |A_top|^2 - |A_mid|^2.
    pub fn predicted(&self) -> f64 {
        self.scalar_top - 2.0 * self.ric_mid - 2.0 * self.ric_top + self.h_top * self.h_top + self.h_mid * self.h_mid
            - self.a_top_sq
            - self.a_mid_sq
    }

    /// The extrinsic assembly minus the ambient scalar curvature.
    pub fn extrinsic(&self) -> f64 {
        self.predicted() - self.scalar_top
    }

    pub fn residual(&self) -> f64 {
        (self.scalar_x - self.predicted()).abs()
    }
}

/// Uses the two slices that end on X: R_2 then R_1, with any higher flat
/// factors held at their chain values.
pub fn gauss_codazzi_terms(ext: &ExtrinsicData) -> Result<GaussCodazziTerms, GeometryError> {
    if ext.k() < 2 {
        return Err(GeometryError::Degenerate("Gauss-Codazzi check needs two flat factors".into()));
    }
    let top = &ext.level(2).surface;
    let mid = &ext.level(1).surface;
    Ok(GaussCodazziTerms {
        scalar_x: ext.scalar_x,
        scalar_top: top.curvature.scalar,
        ric_top: top.ric_nn,
        ric_mid: mid.ric_nn,
        h_top: top.h,
        h_mid: mid.h,
        a_top_sq: top.a_norm_sq,
        a_mid_sq: mid.a_norm_sq,
    })
}

pub fn gauss_codazzi_residual(chain: &SliceChain, x: &[f64]) -> Result<f64, GeometryError> {
    Ok(gauss_codazzi_terms(&extrinsic_at(chain, x)?)?.residual())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_metric_spec;

    pub(crate) fn example_2_1() -> MetricSpec {
        parse_metric_spec(
            r#"{"coords":["x","y","zeta","xi"],"flat":["zeta","xi"],"params":{"a":3},
                "topology":{"x":{"kind":"periodic","period":6.283185307179586},"y":{"kind":"periodic","period":6.283185307179586}},
                "components":{"x,x":"1","y,y":"1","zeta,zeta":"a","xi,xi":"a",
                              "zeta,xi":"1/((1+exp(-xi))*(1+exp(-zeta)))"}}"#,
        )
        .unwrap()
    }

    #[test]
    fn example_normal_at_origin() {
        let chain = SliceChain::standard(&example_2_1()).unwrap();
        let ext = extrinsic_at(&chain, &[0.0, 0.0]).unwrap();
        let nu = &ext.level(2).surface.normal;
        // closed form (-b, a) / sqrt(a (a^2 - b^2)) with a = 3, b = 1/4
        let den = (3.0f64 * (9.0 - 0.0625)).sqrt();
        assert!((nu[2] + 0.25 / den).abs() < 1e-14);
        assert!((nu[3] - 3.0 / den).abs() < 1e-14);
        assert!((nu[2] + 0.0482804549585).abs() < 1e-12);
        assert!((nu[3] - 0.579365459502).abs() < 1e-12);
        let lv = ext.level(2);
        assert!(!lv.degenerate && lv.v == vec![0.0, 0.0]);
        assert!((lv.projected_norm_sq - 0.0625 / 8.9375).abs() < 1e-14);
        // nu of the second slice is a^{-1/2} d_zeta
        assert!((ext.level(1).surface.normal[2] - 3f64.powf(-0.5)).abs() < 1e-14);
        assert!(ext.coefficient_gap(2) > 1.0);
    }

    #[test]
    fn double_slice_leaves_x() {
        let chain = SliceChain::standard(&example_2_1()).unwrap();
        assert_eq!(chain.x_spec().coords(), &["x".to_string(), "y".to_string()]);
        assert_eq!(chain.level(1).coords(), &["x", "y", "zeta"]);
        // zeta,zeta block is the literal a after substitution, cross term gone
        let g = chain.level(1).eval_matrix(&[0.3, 0.1, 0.7]).unwrap();
        assert_eq!(g[8], 3.0);
        assert_eq!(g[5], 0.0);
        let names: Vec<_> = chain.slices().into_iter().map(|s| s.coord).collect();
        assert_eq!(names, vec!["xi", "zeta"]);
    }

    #[test]
    fn unit_sphere_in_flat_space() {
        // ambient spherical coordinates ordered (theta, phi, r); slice r = 1
        let s = parse_metric_spec(
            r#"{"coords":["theta","phi","r"],"flat":["r"],"components":{"theta,theta":"r^2","phi,phi":"r^2*sin(theta)^2","r,r":"1"}}"#,
        )
        .unwrap();
        let hd = hypersurface_at(&s, &[1.1, 0.4, 1.0]).unwrap();
        assert!((hd.h - 2.0).abs() < 1e-13);
        assert!((hd.a_norm_sq - 2.0).abs() < 1e-13);
        assert!(hd.ric_nn.abs() < 1e-13);
    }

    #[test]
    fn product_is_totally_geodesic() {
        let s = parse_metric_spec(
            r#"{"coords":["theta","phi","zeta","xi"],"flat":["zeta","xi"],
                "topology":{"theta":{"kind":"polar","partner":"phi"},"phi":{"kind":"periodic","period":6.283185307179586}},
                "components":{"theta,theta":"1","phi,phi":"sin(theta)^2","zeta,zeta":"1","xi,xi":"1"}}"#,
        )
        .unwrap();
        let chain = SliceChain::standard(&s).unwrap();
        let ext = extrinsic_at(&chain, &[0.8, 2.0]).unwrap();
        assert_eq!(ext.level(2).surface.normal, vec![0.0, 0.0, 0.0, 1.0]);
        assert!(ext.level(2).degenerate);
        assert_eq!(ext.level(1).coef, 1.0);
        let t = gauss_codazzi_terms(&ext).unwrap();
        assert!(t.h_top.abs() < 1e-15 && t.a_mid_sq.abs() < 1e-15);
        assert!(t.residual() < 1e-12);
    }

    #[test]
    fn example_gauss_codazzi() {
        let chain = SliceChain::standard(&example_2_1()).unwrap();
        for x in [0.0, 1.3, 4.0] {
            assert!(gauss_codazzi_residual(&chain, &[x, 0.5]).unwrap() < 1e-12);
        }
    }

    #[test]
    fn nonzero_slice_values() {
        let chain = SliceChain::at(&example_2_1(), &[0.5, -1.0]).unwrap();
        let ext = extrinsic_at(&chain, &[0.2, 0.1]).unwrap();
        let nu = &ext.level(2).surface.normal;
        let g = &ext.level(2).surface.ambient.g;
        let norm: f64 = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| g[(a, b)] * nu[a] * nu[b]).sum();
        assert!((norm - 1.0).abs() < 1e-14);
        assert!(gauss_codazzi_residual(&chain, &[0.2, 0.1]).unwrap() < 1e-12);
    }

    #[test]
    fn unit_normal_any_coordinate() {
        let nu = unit_normal(&example_2_1(), "xi", &[0.0; 4]).unwrap();
        assert!((nu[3] - 0.579365459502).abs() < 1e-12);
        assert!(unit_normal(&example_2_1(), "w", &[0.0; 4]).is_err());
    }
}
