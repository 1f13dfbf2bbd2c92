//! The end-to-end construction: hypotheses, angle verdict, ellipticity, the
//! bump-driven solve on X x S^1, a-posteriori gates, and the direct scalar
//! curvature of the conformally changed metric on X.

use serde::{Deserialize, Serialize};

use crate::angle::{angle_report_from, ellipticity_certificate, extrinsic_on_grid, symbol_fields, AngleVerdict, EllipticityCertificate};
use crate::dsl::{MetricSpec, Topology};
use crate::geometry::stencil::{covariant_hessian_vv_pointwise, laplace_pointwise};
use crate::geometry::{metric_at, volume, ChartGrid, GeometryError, StencilOrder, Stencils};
use crate::hypersurface::{gauss_codazzi_terms, ExtrinsicData, SliceChain};
use crate::par::{map_range, try_map_range, ExecPolicy};
use crate::solver::{
    assemble, build_bump, choose_epsilon, pde_coefficients, second_t_derivative_at_zero,
    second_t_derivative_sup, solve, BumpSpec, C1AlphaNorm, CoefField, DiscreteOperator, EpsilonChoice, SolveReport, SolverConfig,
    SolverError,
};

/// Slack on R >= kappa0 for metrics that sit exactly on the bound.
pub const KAPPA_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid pipeline configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Verdict {
    Success,
    AngleFail,
    HypothesisFail,
    NotElliptic,
    GateFail,
    NotPositive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub kappa0: f64,
    /// Bound for the C^{1,alpha} norm of u.
    pub eta: f64,
    /// Bound for |d_t^2 u| near t = 0.
    pub eta_prime: f64,
    pub c_margin: f64,
    pub x_grid: Vec<usize>,
    pub t_nodes: usize,
    pub circle_length: f64,
    /// Starting support half-width; `None` means a quarter of the circle.
    pub eps_max: Option<f64>,
    /// Sobolev exponent for the bump norm; `None` means dim W + 1.
    pub p: Option<f64>,
    /// Target for ||F||_p; `None` means eta.
    pub delta: Option<f64>,
    pub retries: usize,
    /// Values of R_1..R_k defining X; empty means all zero.
    pub slice_values: Vec<f64>,
    pub solver: SolverConfig,
    pub stencil_order: StencilOrder,
    /// Solve even when the ellipticity certificate fails.
    pub force: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kappa0: 2.0,
            eta: 0.05,
            eta_prime: 0.05,
            c_margin: 1.0,
            x_grid: vec![64, 64],
            t_nodes: 32,
            circle_length: 0.5,
            eps_max: None,
            p: None,
            delta: None,
            retries: 4,
            slice_values: Vec::new(),
            solver: SolverConfig::default(),
            stencil_order: StencilOrder::Second,
            force: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Invalid(m.into()));
        if !(self.kappa0 > 0.0) {
            return bad("kappa0 must be positive");
        }
        if !(self.eta > 0.0 && self.eta_prime > 0.0) {
            return bad("gate bounds must be positive");
        }
        if self.t_nodes % 2 != 0 || self.t_nodes < 8 {
            return bad("t_nodes must be even and at least 8");
        }
        if !(self.circle_length > 0.0) {
            return bad("circle length must be positive");
        }
        if !(self.solver.alpha > 0.0 && self.solver.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub kappa0: f64,
    pub min_scalar: f64,
    pub min_scalar_at: Vec<f64>,
    pub scalar_ok: bool,
    /// Sup of |Rm| over the samples.
    pub curvature_sup: f64,
    pub samples: usize,
    pub sampled_only: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AngleSummary {
    pub verdict: AngleVerdict,
    pub max_lhs: f64,
    pub rhs: f64,
    pub worst_x: Vec<f64>,
    pub failing_nodes: usize,
    pub nodes: usize,
    pub branch: Vec<Option<bool>>,
    /// Largest gap between the literal slice coefficient and its unit-normal formula.
    pub max_coefficient_gap: f64,
    pub coefficient_identity_flag: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub min_eigenvalue: f64,
    pub max_q: f64,
    pub margin: f64,
    pub c1: f64,
    pub c2: f64,
    pub positive: bool,
    pub disagreements: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Gate {
    pub value: Option<f64>,
    pub bound: f64,
    pub passed: Option<bool>,
    /// Advisory gates are reported but do not decide the verdict.
    pub mandatory: bool,
}

impl Gate {
    fn below(value: f64, bound: f64, mandatory: bool) -> Gate {
        Gate { value: Some(value), bound, passed: Some(value < bound), mandatory }
    }

    fn failed_mandatory(&self) -> bool {
        self.mandatory && self.passed != Some(true)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GateReport {
    pub c1alpha: Gate,
    pub c1alpha_parts: C1AlphaNorm,
    pub u_tt_window: Gate,
    pub u_tt_at_zero: f64,
    /// 4 |A_1| with A_1 the difference of the ambient and product Laplacians of u.
    pub laplacian_gap: Gate,
    pub gradient_quotient: Gate,
    pub u_w_min: f64,
    pub u_w_max: f64,
    pub u_w_bounds: bool,
}

impl GateReport {
    pub fn mandatory_passed(&self) -> bool {
        self.u_w_bounds
            && ![&self.c1alpha, &self.u_tt_window, &self.laplacian_gap, &self.gradient_quotient]
                .iter()
                .any(|g| g.failed_mandatory())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Attempt {
    pub eps: f64,
    pub bump_lp_norm: f64,
    pub solve: SolveReport,
    pub gates: GateReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureResult {
    pub min_r_tilde: f64,
    pub max_abs_r_tilde: f64,
    pub min_r_tilde_at: Vec<f64>,
    pub min_r_x: f64,
    pub crosscheck_max: f64,
    pub crosscheck_relative: f64,
    pub gauss_codazzi_max: Option<f64>,
    pub coherence: f64,
    /// Per X node, in grid order.
    #[serde(skip)]
    pub nodes: Vec<NodeCurvature>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeCurvature {
    pub x: Vec<f64>,
    pub r_x: f64,
    pub u_x: f64,
    pub r_tilde: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub n: usize,
    pub k: usize,
    pub x_grid: Vec<usize>,
    pub t_nodes: usize,
    pub hypothesis: HypothesisReport,
    pub angle: AngleSummary,
    pub certificate: Option<CertificateSummary>,
    pub c_constant: Option<f64>,
    pub epsilon: Option<EpsilonChoice>,
    pub attempts: Vec<Attempt>,
    pub curvature: Option<CurvatureResult>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

/// C = 2 max over X of the extrinsic sum plus 3 plus the margin.
pub fn compute_c_constant(exts: &[ExtrinsicData], margin: f64) -> f64 {
    let worst = exts
        .iter()
        .map(|e| {
            e.levels
                .iter()
                .map(|l| {
                    let s = &l.surface;
                    2.0 * s.ric_nn.abs() + s.h * s.h + s.a_norm_sq
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    2.0 * worst + 3.0 + margin
}

/// u_W = u + 1 on X x S^1 and its constant extensions to X x R^k.
#[derive(Debug, Clone)]
pub struct ConformalFactor {
    pub grid: ChartGrid,
    pub u_w: Vec<f64>,
    pub n: usize,
    pub k: usize,
    pub exponent: f64,
    t0: usize,
    n_t: usize,
}

impl ConformalFactor {
    pub fn new(u: &[f64], grid: &ChartGrid, k: usize) -> Result<ConformalFactor, PipelineError> {
        if u.len() != grid.len() {
            return Err(PipelineError::Invalid("solution does not match the grid".into()));
        }
        let n = grid.dim();
        if n < 3 {
            return Err(PipelineError::Invalid("dim X must be at least 2".into()));
        }
        let n_t = grid.axis(n - 1).n;
        Ok(ConformalFactor {
            grid: grid.clone(),
            u_w: u.iter().map(|v| v + 1.0).collect(),
            n,
            k,
            exponent: 4.0 / (n - 2) as f64,
            t0: n_t / 2,
            n_t,
        })
    }

    pub fn x_len(&self) -> usize {
        self.grid.len() / self.n_t
    }

    /// Node of W over X node `x` at t = 0.
    pub fn w_node(&self, x: usize) -> usize {
        x * self.n_t + self.t0
    }

    pub fn u_x(&self) -> Vec<f64> {
        (0..self.x_len()).map(|x| self.u_w[self.w_node(x)]).collect()
    }

    /// u_M at (x, R_1..R_k): constant along the flat factors.
    pub fn u_m(&self, x: usize, _flat: &[f64]) -> f64 {
        self.u_w[self.w_node(x)]
    }

    /// u on X x R_1..R_{k-1}, the first slice.
    pub fn u_y(&self, x: usize, _flat: &[f64]) -> f64 {
        self.u_m(x, &[])
    }

    /// max |u_X - u_Y| + |u_X - u_M| at matching nodes; zero by construction.
    pub fn coherence(&self, slice_values: &[f64]) -> f64 {
        let ux = self.u_x();
        let upper = slice_values.len().min(self.k.saturating_sub(1));
        ux.iter()
            .enumerate()
            .map(|(x, v)| (v - self.u_y(x, &slice_values[..upper])).abs() + (v - self.u_m(x, slice_values)).abs())
            .fold(0.0, f64::max)
    }

    /// (min, max) of u_W over |t| <= eps/2.
    pub fn bounds_within(&self, eps: f64) -> (f64, f64) {
        let ta = self.n - 1;
        let ax = self.grid.axis(ta);
        (0..self.grid.len())
            .filter(|&w| ax.coord(self.grid.index_along(w, ta)).abs() <= 0.5 * eps + 1e-12)
            .map(|w| self.u_w[w])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    }
}

/// Scalar curvature of u^{4/(n-2)} g_X with n = dim X + 1:
/// u^{-(n+2)/(n-2)} (R_X u - 4 Lap u + 4/(n-2) |grad u|^2 / u).
pub fn direct_r_tilde(
    x_spec: &MetricSpec,
    grid: &ChartGrid,
    u: &[f64],
    order: StencilOrder,
) -> Result<Vec<f64>, GeometryError> {
    if u.len() != grid.len() || grid.dim() != x_spec.dim() {
        return Err(GeometryError::Grid("factor, grid and metric dimensions disagree".into()));
    }
    let n = x_spec.dim() as f64 + 1.0;
    let st = Stencils::new(grid, order);
    try_map_range(ExecPolicy::default(), grid.len(), |node| {
        let pm = metric_at(x_spec, &grid.coords(node))?;
        let ch = pm.christoffel();
        let r = crate::geometry::curvature(&pm, &ch).scalar;
        let (g, h) = st.derivatives(grid, u, node)?;
        let lap = laplace_pointwise(&pm, &ch, &g, &h);
        let g2 = quad(&pm.ginv, &g);
        let v = u[node];
        Ok(v.powf(-(n + 2.0) / (n - 2.0)) * (r * v - 4.0 * lap + 4.0 / (n - 2.0) * g2 / v))
    })
}

fn quad(m: &nalgebra::DMatrix<f64>, v: &[f64]) -> f64 {
    let d = v.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += m[(i, j)] * v[i] * v[j];
        }
    }
    s
}

/// Pointwise data of u_W at a slice node of W (t = 0).
struct SliceDerivatives {
    grad_x: Vec<f64>,
    hess_x: Vec<f64>,
    u_tt: f64,
}

fn slice_derivatives(st: &Stencils, grid: &ChartGrid, u_w: &[f64], w: usize) -> Result<SliceDerivatives, GeometryError> {
    let (g, h) = st.derivatives(grid, u_w, w)?;
    let wd = grid.dim();
    let d = wd - 1;
    let hess_x = (0..d * d).map(|ij| h[(ij / d) * wd + ij % d]).collect();
    Ok(SliceDerivatives { grad_x: g[..d].to_vec(), hess_x, u_tt: h[wd * wd - 1] })
}

/// The PDE fields at one node: coefficient and X part of each projected normal.
fn coef_fields(ext: &ExtrinsicData, degenerate: &[bool]) -> Vec<CoefField> {
    symbol_fields(ext, degenerate).into_iter().map(|f| CoefField { coef: 4.0 * f.weight, v: f.v }).collect()
}

/// Right-hand side for R~_X assembled from the Gauss equation and the PDE:
/// u_X^{-(n+2)/(n-2)} (G u_W - R u_W + F + R - sum c_j Hess u(V_j, V_j)
/// + 4 d_t^2 u + 4/(n-2) |grad_X u|^2 / u_W), with G the Gauss-equation value
/// of R_X and R the ambient scalar curvature.
pub fn crosscheck_rhs(
    ext: &ExtrinsicData,
    degenerate: &[bool],
    factor: &ConformalFactor,
    f: &[f64],
    x: usize,
    st: &Stencils,
) -> Result<f64, PipelineError> {
    let w = factor.w_node(x);
    let sd = slice_derivatives(st, &factor.grid, &factor.u_w, w)?;
    let ch = ext.gx.christoffel();
    let g = if ext.k() >= 2 { gauss_codazzi_terms(ext)?.predicted() } else { ext.scalar_x };
    let r = ext.scalar_full();
    let hv: f64 = coef_fields(ext, degenerate)
        .iter()
        .map(|cf| cf.coef * covariant_hessian_vv_pointwise(&ch, &sd.grad_x, &sd.hess_x, &cf.v))
        .sum();
    let n = factor.n as f64;
    let u = factor.u_w[w];
    let g2 = quad(&ext.gx.ginv, &sd.grad_x);
    Ok(u.powf(-(n + 2.0) / (n - 2.0)) * (g * u - r * u + f[w] + r - hv + 4.0 * sd.u_tt + 4.0 / (n - 2.0) * g2 / u))
}

/// |R~ direct - assembled right-hand side| at X node `x`.
pub fn crosscheck_formula(
    ext: &ExtrinsicData,
    degenerate: &[bool],
    factor: &ConformalFactor,
    f: &[f64],
    r_tilde: &[f64],
    x: usize,
    st: &Stencils,
) -> Result<f64, PipelineError> {
    Ok((r_tilde[x] - crosscheck_rhs(ext, degenerate, factor, f, x, st)?).abs())
}

/// Laplacian of the extension of u_W to M x S^1 minus the product Laplacian
/// on X x S^1, at t = 0. Carries second derivatives of u wherever g^{-1}
/// restricted to X differs from g_X^{-1}.
fn laplacian_gap(ext: &ExtrinsicData, sd: &SliceDerivatives) -> f64 {
    let d = ext.x_dim();
    let full = &ext.levels.last().expect("k >= 1").surface.ambient;
    let m = full.n;
    let chm = full.christoffel();
    let chx = ext.gx.christoffel();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += (full.ginv[(i, j)] - ext.gx.ginv[(i, j)]) * sd.hess_x[i * d + j];
        }
    }
    for k in 0..d {
        let mut gm = 0.0;
        for a in 0..m {
            for b in 0..m {
                gm += full.ginv[(a, b)] * chm.get(k, a, b);
            }
        }
        let mut gx = 0.0;
        for i in 0..d {
            for j in 0..d {
                gx += ext.gx.ginv[(i, j)] * chx.get(k, i, j);
            }
        }
        s -= (gm - gx) * sd.grad_x[k];
    }
    s
}

/// 4/(n-2) (n sum_j B_j (V_j u)^2 + |grad_X u|^2) / u_W at t = 0.
fn gradient_quotient(ext: &ExtrinsicData, degenerate: &[bool], sd: &SliceDerivatives, u: f64) -> f64 {
    let n = ext.x_dim() + 1;
    let nf = n as f64;
    let dir: f64 = symbol_fields(ext, degenerate)
        .iter()
        .map(|f| {
            let vu: f64 = f.v.iter().zip(&sd.grad_x).map(|(a, b)| a * b).sum();
            f.weight * vu * vu
        })
        .sum();
    4.0 / (nf - 2.0) * (nf * dir + quad(&ext.gx.ginv, &sd.grad_x)) / u
}

fn hypothesis(chain: &SliceChain, exts: &[ExtrinsicData], x_grid: &ChartGrid, kappa0: f64) -> Result<HypothesisReport, GeometryError> {
    let full = chain.full();
    let d = chain.x_dim();
    let k = chain.k();
    let mut min_scalar = f64::INFINITY;
    let mut min_at = Vec::new();
    let mut sup: f64 = 0.0;
    for e in exts {
        let top = &e.levels.last().expect("k >= 1").surface;
        let r = top.curvature.scalar;
        if r < min_scalar {
            min_scalar = r;
            min_at = chain.lift(&e.x, k);
        }
        sup = sup.max(top.curvature.riemann_norm_sq(&top.ambient).max(0.0).sqrt());
    }
    // off-slice samples: a coarse X subset times the ends and middle of each flat factor
    let levels: Vec<Vec<f64>> = (0..k)
        .map(|j| match full.topology()[d + j] {
            Topology::Line { lo, hi } => vec![lo, 0.5 * (lo + hi), hi],
            Topology::Periodic { period } => vec![0.0, 0.5 * period],
            Topology::Polar { .. } => vec![0.5 * std::f64::consts::PI],
        })
        .collect();
    let stride = (x_grid.len() / 64).max(1);
    let mut flats: Vec<Vec<f64>> = vec![Vec::new()];
    for lv in &levels {
        flats = flats.iter().flat_map(|p| lv.iter().map(move |v| [p.as_slice(), &[*v]].concat())).collect();
    }
    let points: Vec<Vec<f64>> = (0..x_grid.len())
        .step_by(stride)
        .flat_map(|i| {
            let x = x_grid.coords(i);
            flats.iter().map(move |f| [x.as_slice(), f.as_slice()].concat())
        })
        .collect();
    let vals = try_map_range(ExecPolicy::default(), points.len(), |i| {
        let pm = metric_at(full, &points[i])?;
        let c = pm.curvature();
        Ok::<_, GeometryError>((c.scalar, c.riemann_norm_sq(&pm).max(0.0).sqrt()))
    })?;
    for (p, (r, rm)) in points.iter().zip(&vals) {
        if *r < min_scalar {
            min_scalar = *r;
            min_at = p.clone();
        }
        sup = sup.max(*rm);
    }
    Ok(HypothesisReport {
        kappa0,
        min_scalar,
        min_scalar_at: min_at,
        scalar_ok: min_scalar >= kappa0 - KAPPA_SLACK,
        curvature_sup: sup,
        samples: exts.len() + points.len(),
        sampled_only: true,
    })
}

fn gates(
    exts: &[ExtrinsicData],
    degenerate: &[bool],
    factor: &ConformalFactor,
    solve: &SolveReport,
    eps: f64,
    cfg: &PipelineConfig,
) -> Result<GateReport, PipelineError> {
    let grid = &factor.grid;
    let st = Stencils::new(grid, cfg.stencil_order);
    let per_node = try_map_range(ExecPolicy::default(), exts.len(), |x| {
        let w = factor.w_node(x);
        let sd = slice_derivatives(&st, grid, &factor.u_w, w)?;
        Ok::<_, GeometryError>((
            4.0 * laplacian_gap(&exts[x], &sd).abs(),
            gradient_quotient(&exts[x], degenerate, &sd, factor.u_w[w]).abs(),
        ))
    })?;
    let gap = per_node.iter().map(|p| p.0).fold(0.0, f64::max);
    let quotient = per_node.iter().map(|p| p.1).fold(0.0, f64::max);
    let u_tt_window = match second_t_derivative_sup(&solve.u, grid, eps) {
        Ok(v) => Gate::below(v, cfg.eta_prime, false),
        Err(_) => Gate { value: None, bound: cfg.eta_prime, passed: None, mandatory: false },
    };
    let (lo, hi) = factor.bounds_within(eps);
    Ok(GateReport {
        c1alpha: Gate::below(solve.c1alpha.norm, cfg.eta, false),
        c1alpha_parts: solve.c1alpha,
        u_tt_window,
        u_tt_at_zero: second_t_derivative_at_zero(&solve.u, grid),
        laplacian_gap: Gate::below(gap, 1.0, false),
        gradient_quotient: Gate::below(quotient, 1.0, true),
        u_w_min: lo,
        u_w_max: hi,
        u_w_bounds: lo >= 0.5 && hi <= 1.5,
    })
}

fn angle_summary(report: &crate::angle::AngleReport) -> AngleSummary {
    // degenerate normals have no slice coefficient to compare
    let gap = report
        .nodes
        .iter()
        .flat_map(|n| n.coefficient_gap.iter().zip(&n.degenerate).filter(|(_, d)| !**d).map(|(g, _)| *g))
        .fold(0.0, f64::max);
    AngleSummary {
        verdict: report.verdict,
        max_lhs: report.max_lhs,
        rhs: report.rhs,
        worst_x: report.nodes.get(report.worst_node).map(|n| n.x.clone()).unwrap_or_default(),
        failing_nodes: report.failing_nodes,
        nodes: report.nodes.len(),
        branch: report.branch.clone(),
        max_coefficient_gap: gap,
        coefficient_identity_flag: gap > 1e-8,
    }
}

/// Slice chain, X grid and extrinsic data shared by the pipeline and the
/// standalone solve.
fn prepare(cfg: &PipelineConfig, spec: &MetricSpec) -> Result<(SliceChain, ChartGrid, Vec<ExtrinsicData>, Vec<f64>), PipelineError> {
    cfg.validate()?;
    let k = spec.k();
    if k < 1 {
        return Err(PipelineError::Invalid("the metric has no flat factor".into()));
    }
    let values = if cfg.slice_values.is_empty() { vec![0.0; k] } else { cfg.slice_values.clone() };
    let chain = SliceChain::at(spec, &values)?;
    let d = chain.x_dim();
    if d < 2 {
        return Err(PipelineError::Invalid("dim X must be at least 2".into()));
    }
    let x_spec = chain.x_spec();
    if !x_spec.topology().iter().all(Topology::is_compact) {
        return Err(PipelineError::Invalid("X chart must be compact".into()));
    }
    if cfg.x_grid.len() != d {
        return Err(PipelineError::Invalid(format!("x_grid has {} entries, dim X is {d}", cfg.x_grid.len())));
    }
    let x_grid = ChartGrid::from_topology(x_spec.topology(), &cfg.x_grid)?;
    let exts = extrinsic_on_grid(&chain, &x_grid)?;
    Ok((chain, x_grid, exts, values))
}

fn pipeline_operator(
    exts: &[ExtrinsicData],
    degenerate: &[bool],
    w_grid: &ChartGrid,
    cfg: &PipelineConfig,
) -> Result<DiscreteOperator, SolverError> {
    let coeffs: Vec<_> = exts
        .iter()
        .map(|e| {
            let ch = e.gx.christoffel();
            pde_coefficients(&e.gx, &ch, &coef_fields(e, degenerate), e.scalar_full())
        })
        .collect();
    let nt = cfg.t_nodes;
    assemble(w_grid, cfg.stencil_order, |w| Ok(coeffs[w / nt].clone()), vec!["symbol-fields".into(), "laplacian".into(), "scalar".into()])
}

/// The pipeline PDE on X x S^1 without the surrounding checks. `op` is
/// `None` when the certificate fails and `force` is off.
#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub grid: ChartGrid,
    pub op: Option<DiscreteOperator>,
    pub certificate: EllipticityCertificate,
    pub c: f64,
}

pub fn pde_problem(cfg: &PipelineConfig, spec: &MetricSpec) -> Result<PdeProblem, PipelineError> {
    let (_, x_grid, exts, _) = prepare(cfg, spec)?;
    let degenerate = branch_flags(&exts);
    let fields: Vec<_> = exts.iter().map(|e| symbol_fields(e, &degenerate)).collect();
    let gxs: Vec<_> = exts.iter().map(|e| e.gx.g.clone()).collect();
    let certificate = ellipticity_certificate(&gxs, &fields);
    let grid = x_grid.with_circle(cfg.circle_length, cfg.t_nodes)?;
    let op = if certificate.positive || cfg.force { Some(pipeline_operator(&exts, &degenerate, &grid, cfg)?) } else { None };
    Ok(PdeProblem { grid, op, certificate, c: compute_c_constant(&exts, cfg.c_margin) })
}

pub fn run_pipeline(cfg: &PipelineConfig, spec: &MetricSpec) -> Result<PipelineReport, PipelineError> {
    let (chain, x_grid, exts, values) = prepare(cfg, spec)?;
    let k = chain.k();
    let n = chain.x_dim() + 1;
    let x_spec = chain.x_spec();
    let hyp = hypothesis(&chain, &exts, &x_grid, cfg.kappa0)?;
    let angle = angle_report_from(&exts);
    let mut report = PipelineReport {
        n,
        k,
        x_grid: cfg.x_grid.clone(),
        t_nodes: cfg.t_nodes,
        hypothesis: hyp,
        angle: angle_summary(&angle),
        certificate: None,
        c_constant: None,
        epsilon: None,
        attempts: Vec::new(),
        curvature: None,
        verdict: Verdict::Success,
        notes: vec!["R >= kappa0 and the curvature bound are checked on samples only".into()],
    };
    if angle.verdict != AngleVerdict::Satisfied {
        report.verdict = Verdict::AngleFail;
        if !report.hypothesis.scalar_ok {
            report.notes.push("scalar curvature hypothesis also fails".into());
        }
        return Ok(report);
    }
    if !report.hypothesis.scalar_ok {
        report.verdict = Verdict::HypothesisFail;
        return Ok(report);
    }
    let degenerate: Vec<bool> = angle.branch.iter().map(|b| b.unwrap_or(false)).collect();
    let fields: Vec<_> = exts.iter().map(|e| symbol_fields(e, &degenerate)).collect();
    let gxs: Vec<_> = exts.iter().map(|e| e.gx.g.clone()).collect();
    let cert = ellipticity_certificate(&gxs, &fields);
    report.certificate = Some(CertificateSummary {
        min_eigenvalue: cert.min_eigenvalue,
        max_q: cert.max_q,
        margin: cert.margin,
        c1: cert.c1,
        c2: cert.c2,
        positive: cert.positive,
        disagreements: cert.disagreements,
    });
    if !cert.positive {
        if !cfg.force {
            report.verdict = Verdict::NotElliptic;
            return Ok(report);
        }
        report.notes.push("ellipticity certificate failed; solving anyway (forced)".into());
    }
    let c = compute_c_constant(&exts, cfg.c_margin);
    report.c_constant = Some(c);

    let w_grid = x_grid.with_circle(cfg.circle_length, cfg.t_nodes)?;
    let dt = cfg.circle_length / cfg.t_nodes as f64;
    let eps_max = cfg.eps_max.unwrap_or(0.25 * cfg.circle_length);
    let p = cfg.p.unwrap_or(n as f64 + 1.0);
    let vol_x = volume(x_spec, &x_grid)?;
    let choice = choose_epsilon(c, cfg.delta.unwrap_or(cfg.eta), p, vol_x, eps_max, dt);
    if !choice.resolvable {
        report.notes.push(format!(
            "norm-driven support width {:.3e} is below the grid resolution; running a posteriori from {eps_max:.3e}",
            choice.eps
        ));
    }
    report.epsilon = Some(choice);

    let op = pipeline_operator(&exts, &degenerate, &w_grid, cfg)?;

    let mut eps = if choice.resolvable { choice.eps } else { eps_max };
    let mut accepted: Option<(ConformalFactor, Vec<f64>)> = None;
    for attempt in 0..=cfg.retries {
        let f = build_bump(&w_grid, BumpSpec { c, eps })?;
        let sol = solve(&op, &f, &cfg.solver)?;
        let factor = ConformalFactor::new(&sol.u, &w_grid, k)?;
        let g = gates(&exts, &degenerate, &factor, &sol, eps, cfg)?;
        let ok = g.mandatory_passed();
        report.attempts.push(Attempt { eps, bump_lp_norm: crate::solver::bump::bump_lp_norm(c, eps, p, vol_x), solve: sol, gates: g });
        accepted = Some((factor, f));
        if ok || attempt == cfg.retries || 0.5 * eps < 4.0 * dt {
            break;
        }
        eps *= 0.5;
    }
    let (factor, f) = accepted.expect("at least one attempt");
    let last = report.attempts.last().expect("at least one attempt");
    let gates_ok = last.gates.mandatory_passed();

    let u_x = factor.u_x();
    let r_tilde = direct_r_tilde(x_spec, &x_grid, &u_x, cfg.stencil_order)?;
    let st = Stencils::new(&w_grid, cfg.stencil_order);
    let dev = try_map_range(ExecPolicy::default(), exts.len(), |x| {
        crosscheck_formula(&exts[x], &degenerate, &factor, &f, &r_tilde, x, &st)
    })?;
    let gc = if k >= 2 {
        let r = map_range(ExecPolicy::default(), exts.len(), |x| gauss_codazzi_terms(&exts[x]).map(|t| t.residual()).unwrap_or(f64::NAN));
        Some(r.into_iter().fold(0.0, f64::max))
    } else {
        None
    };
    let (imin, min_r) = r_tilde.iter().enumerate().fold((0, f64::INFINITY), |a, (i, v)| if *v < a.1 { (i, *v) } else { a });
    let max_abs = r_tilde.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cross = dev.iter().cloned().fold(0.0, f64::max);
    report.curvature = Some(CurvatureResult {
        min_r_tilde: min_r,
        max_abs_r_tilde: max_abs,
        min_r_tilde_at: x_grid.coords(imin),
        min_r_x: exts.iter().map(|e| e.scalar_x).fold(f64::INFINITY, f64::min),
        crosscheck_max: cross,
        crosscheck_relative: if max_abs > 0.0 { cross / max_abs } else { cross },
        gauss_codazzi_max: gc,
        coherence: factor.coherence(&values),
        nodes: exts
            .iter()
            .enumerate()
            .map(|(i, e)| NodeCurvature { x: e.x.clone(), r_x: e.scalar_x, u_x: u_x[i], r_tilde: r_tilde[i] })
            .collect(),
    });
    report.verdict = if !gates_ok {
        Verdict::GateFail
    } else if min_r > 0.0 {
        Verdict::Success
    } else {
        Verdict::NotPositive
    };
    report.notes.push("completeness of the new metric follows from the uniform bounds on u_W".into());
    Ok(report)
}

/// Degenerate-branch flags as the pipeline chooses them for `exts`.
pub fn branch_flags(exts: &[ExtrinsicData]) -> Vec<bool> {
    angle_report_from(exts).branch.iter().map(|b| b.unwrap_or(false)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::build;
    use std::collections::BTreeMap;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn product_sphere_succeeds() {
        let spec = build("product", &params(&[]), None).unwrap();
        let r = run_pipeline(&PipelineConfig::default(), &spec).unwrap();
        assert_eq!(r.verdict, Verdict::Success);
        let c = r.curvature.unwrap();
        assert!(c.min_r_tilde > 0.0 && c.coherence == 0.0);
        assert!(c.crosscheck_relative <= 5e-2);
        assert_eq!(r.c_constant, Some(4.0));
    }

    #[test]
    fn perturbed_product_run() {
        let spec = build("perturbed-product", &params(&[]), None).unwrap();
        let cfg = PipelineConfig { kappa0: 1.0, x_grid: vec![32, 32], ..Default::default() };
        let r = run_pipeline(&cfg, &spec).unwrap();
        assert_eq!(r.angle.verdict, AngleVerdict::Satisfied);
        assert!(r.c_constant.unwrap() > 4.0);
        assert!(!r.angle.coefficient_identity_flag);
        assert_eq!(r.verdict, Verdict::Success);
    }

    #[test]
    fn example_family_angle_fails() {
        let spec = build("example-2-1", &params(&[]), None).unwrap();
        let cfg = PipelineConfig { x_grid: vec![16, 16], ..Default::default() };
        let r = run_pipeline(&cfg, &spec).unwrap();
        assert_eq!(r.verdict, Verdict::AngleFail);
        assert!(r.attempts.is_empty() && !r.hypothesis.scalar_ok);
        assert!(r.angle.coefficient_identity_flag);
    }

    #[test]
    fn low_scalar_curvature_stops_before_solving() {
        let spec = build("product", &params(&[("r", 2.0)]), None).unwrap();
        let cfg = PipelineConfig { x_grid: vec![16, 16], ..Default::default() };
        let r = run_pipeline(&cfg, &spec).unwrap();
        assert_eq!(r.verdict, Verdict::HypothesisFail);
        assert!(r.attempts.is_empty());
    }

    #[test]
    fn c_constant_grows_with_amplitude() {
        let x = ChartGrid::from_topology(build("round-sphere", &params(&[]), None).unwrap().topology(), &[16, 16]).unwrap();
        let mut last = 0.0;
        for amp in [0.0, 0.02, 0.05, 0.1] {
            let spec = build("perturbed-product", &params(&[("amp", amp)]), None).unwrap();
            let exts = extrinsic_on_grid(&SliceChain::standard(&spec).unwrap(), &x).unwrap();
            let c = compute_c_constant(&exts, 1.0);
            if amp == 0.0 {
                assert!((c - 4.0).abs() < 1e-12);
            } else {
                assert!(c > last);
            }
            last = c;
        }
    }

    #[test]
    fn factor_from_constant_solutions() {
        let g = ChartGrid::from_topology(build("round-sphere", &params(&[]), None).unwrap().topology(), &[8, 8])
            .unwrap()
            .with_circle(0.5, 8)
            .unwrap();
        let f = ConformalFactor::new(&vec![0.0; g.len()], &g, 2).unwrap();
        assert_eq!(f.bounds_within(0.5), (1.0, 1.0));
        assert_eq!(f.coherence(&[0.0, 0.0]), 0.0);
        let f = ConformalFactor::new(&vec![1.0; g.len()], &g, 2).unwrap();
        let (lo, hi) = f.bounds_within(0.5);
        assert!(lo == 2.0 && hi > 1.5);
    }

    #[test]
    fn direct_curvature_matches_conformal_law() {
        let spec = build("round-sphere", &params(&[]), None).unwrap();
        let phi_src = "0.1*cos(theta) + 0.05*sin(theta)^2*cos(2*phi)";
        // u^{4/(n-2)} = e^{2 phi} with n = 3
        let phi = crate::dsl::parse_expression(phi_src).unwrap();
        let mut errs = Vec::new();
        for m in [32, 64] {
            let g = ChartGrid::from_topology(spec.topology(), &[m, m]).unwrap();
            let cu = crate::dsl::CompiledExpr::new(&phi, spec.coords()).unwrap();
            let u: Vec<f64> = (0..g.len()).map(|i| (0.5 * cu.eval(&g.coords(i)).unwrap()).exp()).collect();
            let rt = direct_r_tilde(&spec, &g, &u, StencilOrder::Second).unwrap();
            let err = (0..g.len())
                .map(|i| (rt[i] - crate::conformal::conformal_scalar_law(&spec, &phi, &g.coords(i)).unwrap()).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < 1e-2 && errs[1] < errs[0], "{errs:?}");
    }
}
