//! Conformally invariant angle quantities and the ellipticity certificate.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dsl::{Expr, MetricSpec};
use crate::geometry::{min_eigenvalue, ChartGrid, GeometryError};
use crate::hypersurface::{extrinsic_at, ExtrinsicData, SliceChain};
use crate::par::{try_map_range, ExecPolicy};

/// B_j = (n + j - 3)/(n - 2), the weight on the j-th projected normal.
pub fn b_weight(n: usize, j: usize) -> f64 {
    (n + j - 3) as f64 / (n - 2) as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct AngleTerms {
    pub lhs: f64,
    pub rhs: f64,
    /// `degenerate[j - 2]` for j = 2..=k.
    pub degenerate: Vec<bool>,
    /// sec^2 of the angle between nu_1 and d_1.
    pub sec2: f64,
    /// A_j for j = 2..=k (0 where degenerate).
    pub a_terms: Vec<f64>,
    pub satisfied: bool,
}

/// `degenerate[j - 2]` selects the branch per projected normal; `None` uses
/// the pointwise flags in `ext`.
pub fn angle_lhs(ext: &ExtrinsicData, degenerate: Option<&[bool]>) -> AngleTerms {
    let d = ext.x_dim();
    let n = d + 1;
    let mut d1 = vec![0.0; d + 1];
    d1[d] = 1.0;
    let g11 = ext.g1[(d, d)];
    let sec = |v: &[f64]| {
        let c = ext.g1_dot(v, &d1);
        if c == 0.0 {
            f64::INFINITY
        } else {
            g11 / (c * c)
        }
    };
    let sec2 = sec(&ext.level(1).projected);
    let mut lhs = sec2;
    let mut rhs = 2.0;
    let mut degen = Vec::new();
    let mut a_terms = Vec::new();
    for j in 2..=ext.k() {
        let dj = match degenerate {
            Some(flags) => flags[j - 2],
            None => ext.level(j).degenerate,
        };
        degen.push(dj);
        if dj {
            a_terms.push(0.0);
            continue;
        }
        let a = b_weight(n, j) * sec(&ext.level(j).projected);
        a_terms.push(a);
        lhs += a;
        rhs += b_weight(n, j);
    }
    AngleTerms { lhs, rhs, degenerate: degen, sec2, a_terms, satisfied: lhs < rhs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum AngleVerdict {
    Satisfied,
    Fail,
    Indeterminate,
}

#[derive(Debug, Clone, Serialize)]
pub struct AngleNode {
    pub x: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub degenerate: Vec<bool>,
    pub satisfied: bool,
    pub projected_norm_sq: Vec<f64>,
    pub coefficient_gap: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AngleReport {
    pub nodes: Vec<AngleNode>,
    pub max_lhs: f64,
    pub rhs: f64,
    pub worst_node: usize,
    /// Per projected normal: `Some(all degenerate)` or `None` when mixed.
    pub branch: Vec<Option<bool>>,
    pub verdict: AngleVerdict,
    pub failing_nodes: usize,
}

/// Degeneracy branch from the all-nodes test, `None` when mixed.
fn global_branch(flags: &[Vec<bool>], k: usize) -> Vec<Option<bool>> {
    (0..k.saturating_sub(1))
        .map(|i| {
            let all = flags.iter().all(|f| f[i]);
            let none = flags.iter().all(|f| !f[i]);
            if all {
                Some(true)
            } else if none {
                Some(false)
            } else {
                None
            }
        })
        .collect()
}

pub fn angle_report_from(exts: &[ExtrinsicData]) -> AngleReport {
    let k = exts.first().map_or(1, |e| e.k());
    let flags: Vec<Vec<bool>> = exts.iter().map(|e| (2..=k).map(|j| e.level(j).degenerate).collect()).collect();
    let branch = global_branch(&flags, k);
    let mixed = branch.iter().any(Option::is_none);
    let chosen: Vec<bool> = branch.iter().map(|b| b.unwrap_or(false)).collect();
    let nodes: Vec<AngleNode> = exts
        .iter()
        .map(|e| {
            let t = angle_lhs(e, Some(&chosen));
            AngleNode {
                x: e.x.clone(),
                lhs: t.lhs,
                rhs: t.rhs,
                degenerate: (2..=k).map(|j| e.level(j).degenerate).collect(),
                satisfied: t.satisfied,
                projected_norm_sq: (1..=k).map(|j| e.level(j).projected_norm_sq).collect(),
                coefficient_gap: (2..=k).map(|j| e.coefficient_gap(j)).collect(),
            }
        })
        .collect();
    let (worst_node, max_lhs) = nodes
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, nd)| if nd.lhs > acc.1 || nd.lhs.is_nan() { (i, nd.lhs) } else { acc });
    let rhs = nodes.first().map_or(2.0, |nd| nd.rhs);
    let failing_nodes = nodes.iter().filter(|nd| !nd.satisfied).count();
    let verdict = if mixed {
        AngleVerdict::Indeterminate
    } else if max_lhs < rhs {
        AngleVerdict::Satisfied
    } else {
        AngleVerdict::Fail
    };
    AngleReport { nodes, max_lhs, rhs, worst_node, branch, verdict, failing_nodes }
}

/// Extrinsic data at every node of an X grid.
pub fn extrinsic_on_grid(chain: &SliceChain, grid: &ChartGrid) -> Result<Vec<ExtrinsicData>, GeometryError> {
    if grid.dim() != chain.x_dim() {
        return Err(GeometryError::Grid("grid does not match dim X".into()));
    }
    try_map_range(ExecPolicy::default(), grid.len(), |i| extrinsic_at(chain, &grid.coords(i)))
}

pub fn check_angle_condition(chain: &SliceChain, grid: &ChartGrid) -> Result<AngleReport, GeometryError> {
    Ok(angle_report_from(&extrinsic_on_grid(chain, grid)?))
}

/// Max |lhs(e^{2 phi} g) - lhs(g)| over the sample points of X.
pub fn conformal_invariance_check(
    spec: &MetricSpec,
    phi: &Expr,
    slice_values: &[f64],
    points: &[Vec<f64>],
) -> Result<f64, GeometryError> {
    let base = SliceChain::at(spec, slice_values)?;
    let conf = SliceChain::at(&spec.conformal(phi)?, slice_values)?;
    let mut worst: f64 = 0.0;
    for x in points {
        let e0 = extrinsic_at(&base, x)?;
        let e1 = extrinsic_at(&conf, x)?;
        let flags: Vec<bool> = (2..=e0.k()).map(|j| e0.level(j).degenerate).collect();
        let l0 = angle_lhs(&e0, Some(&flags)).lhs;
        let l1 = angle_lhs(&e1, Some(&flags)).lhs;
        worst = worst.max((l0 - l1).abs());
    }
    Ok(worst)
}

/// A tangent vector on X with its weight in the symbol.
#[derive(Debug, Clone)]
pub struct WeightedField {
    pub weight: f64,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CertificateNode {
    pub q: f64,
    pub min_eigenvalue: f64,
    /// Weighted squared norms, one per field.
    pub t1: f64,
    pub t2: f64,
}

/// q = sum w |V|^2 and the least eigenvalue of I - sum w V V^flat expressed
/// in a g_X-orthonormal frame.
pub fn certificate_at(gx: &DMatrix<f64>, fields: &[WeightedField]) -> CertificateNode {
    let d = gx.nrows();
    let chol = gx.clone().cholesky().expect("metric already validated");
    let l = chol.l();
    let mut sym = DMatrix::<f64>::identity(d, d);
    let mut q = 0.0;
    let mut ts = Vec::with_capacity(fields.len());
    for f in fields {
        let w = l.transpose() * nalgebra::DVector::from_column_slice(&f.v);
        let t = f.weight * w.norm_squared();
        q += t;
        ts.push(t);
        sym -= f.weight * &w * w.transpose();
    }
    let t1 = ts.first().copied().unwrap_or(0.0);
    let t2: f64 = ts.iter().skip(1).sum();
    CertificateNode { q, min_eigenvalue: min_eigenvalue(&sym), t1, t2 }
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticityCertificate {
    pub nodes: Vec<CertificateNode>,
    pub max_q: f64,
    pub margin: f64,
    pub min_eigenvalue: f64,
    pub c1: f64,
    pub c2: f64,
    /// Authoritative gate: the symbol eigenvalue test.
    pub positive: bool,
    /// Nodes where q < 1 and the eigenvalue test disagree.
    pub disagreements: usize,
}

/// Symbol fields at a node: B_j-weighted X parts of the projected normals
/// for non-degenerate j, then the X part of nu_1 with weight 1.
pub fn symbol_fields(ext: &ExtrinsicData, degenerate: &[bool]) -> Vec<WeightedField> {
    let n = ext.x_dim() + 1;
    let mut out: Vec<WeightedField> = (2..=ext.k())
        .rev()
        .filter(|&j| !degenerate[j - 2])
        .map(|j| WeightedField { weight: b_weight(n, j), v: ext.level(j).v.clone() })
        .collect();
    out.push(WeightedField { weight: 1.0, v: ext.level(1).v.clone() });
    out
}

pub fn ellipticity_certificate(gxs: &[DMatrix<f64>], fields: &[Vec<WeightedField>]) -> EllipticityCertificate {
    let nodes: Vec<CertificateNode> = gxs.iter().zip(fields).map(|(g, f)| certificate_at(g, f)).collect();
    let max_q = nodes.iter().map(|c| c.q).fold(0.0, f64::max);
    let min_eig = nodes.iter().map(|c| c.min_eigenvalue).fold(f64::INFINITY, f64::min);
    let m1 = nodes.iter().map(|c| c.t1).fold(0.0, f64::max);
    let m2 = nodes.iter().map(|c| c.t2).fold(0.0, f64::max);
    let (c1, c2) = if m1 + m2 > 0.0 { (m1 / (m1 + m2), m2 / (m1 + m2)) } else { (0.5, 0.5) };
    let disagreements = nodes.iter().filter(|c| (c.q < 1.0) != (c.min_eigenvalue > 0.0)).count();
    EllipticityCertificate {
        nodes,
        max_q,
        margin: 1.0 - max_q,
        min_eigenvalue: min_eig,
        c1,
        c2,
        positive: min_eig > 0.0,
        disagreements,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SylvesterMinors {
    pub direct: Vec<f64>,
    /// C2^{m-1} (C2 - sum_{i<=m} b_i^2).
    pub eigen_form: Vec<f64>,
    /// C2^m (C2 - sum_{i<=m} b_i^2), the exponent as printed.
    pub printed_form: Vec<f64>,
}

/// Leading principal minors of C2 I - b b^T.
pub fn sylvester_minors(b: &[f64], c2: f64) -> SylvesterMinors {
    let k = b.len();
    let full = DMatrix::from_fn(k, k, |i, j| if i == j { c2 } else { 0.0 } - b[i] * b[j]);
    let mut direct = Vec::with_capacity(k);
    let mut eigen_form = Vec::with_capacity(k);
    let mut printed_form = Vec::with_capacity(k);
    let mut s = 0.0;
    for m in 1..=k {
        direct.push(full.view((0, 0), (m, m)).into_owned().determinant());
        s += b[m - 1] * b[m - 1];
        eigen_form.push(c2.powi(m as i32 - 1) * (c2 - s));
        printed_form.push(c2.powi(m as i32) * (c2 - s));
    }
    SylvesterMinors { direct, eigen_form, printed_form }
}
