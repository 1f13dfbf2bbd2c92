use serde::Serialize;

use psc_core::angle::{angle_lhs, angle_report_from, extrinsic_on_grid, AngleVerdict};
use psc_core::dsl::{MetricSpec, Topology};
use psc_core::geometry::{brioschi_k, metric_at, scalar_curvature, ChartGrid, GeometryError};
use psc_core::hypersurface::{extrinsic_at, gauss_codazzi_terms, SliceChain};
use psc_core::par::{map_range, try_map_range, ExecPolicy};
use psc_core::pipeline::{pde_problem, run_pipeline, PipelineError, Verdict};
use psc_core::registry;
use psc_core::solver::{build_bump, solve, spectrum_lower_bound, yamabe_quotient, BumpSpec, SolveReport, SolverError, SpectrumEstimate};

use crate::config::{default_resolution, RunConfig};
use crate::emit::{num, nums, per_level, Out};
use crate::Failure;

/// Outcome of a completed run; exit code 0 or 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    fn from(pass: bool) -> Status {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

fn geometry(e: GeometryError) -> Failure {
    Failure::input(e.to_string())
}

fn solver(e: SolverError) -> Failure {
    match e {
        SolverError::NotConverged { .. } | SolverError::Breakdown { .. } | SolverError::Singular(_) => Failure::solver(e.to_string()),
        other => Failure::input(other.to_string()),
    }
}

fn pipeline(e: PipelineError) -> Failure {
    match e {
        PipelineError::Solver(s) => solver(s),
        other => Failure::input(other.to_string()),
    }
}

fn chain(spec: &MetricSpec, cfg: &RunConfig) -> Result<SliceChain, Failure> {
    if spec.k() < 1 {
        return Err(Failure::input("the metric has no flat factor to slice"));
    }
    let values = &cfg.pipeline.slice_values;
    let chain = if values.is_empty() { SliceChain::standard(spec) } else { SliceChain::at(spec, values) };
    chain.map_err(geometry)
}

/// Moves `grid` into the pipeline X grid and fills in a default that fits dim X.
fn resolve_x_grid(cfg: &mut RunConfig, d: usize) {
    let x = &mut cfg.pipeline.x_grid;
    match cfg.grid.take() {
        Some(g) if g.len() == 1 => *x = vec![g[0]; d],
        Some(g) => *x = g,
        None if x.len() != d => *x = vec![default_resolution(d); d],
        None => {}
    }
}

#[derive(Serialize)]
struct CurvatureSummary {
    coords: Vec<String>,
    grid: Vec<usize>,
    nodes: usize,
    min_scalar: f64,
    max_scalar: f64,
    max_abs_scalar: f64,
    min_scalar_at: Vec<f64>,
}

pub fn curvature(cfg: &mut RunConfig, out: &Out) -> Result<Status, Failure> {
    let spec = cfg.spec()?;
    let dims = cfg.grid_or(spec.dim(), default_resolution(spec.dim()))?;
    out.json("effective-config.json", cfg)?;
    let grid = ChartGrid::from_topology(spec.topology(), &dims).map_err(geometry)?;
    let r = try_map_range(ExecPolicy::default(), grid.len(), |i| scalar_curvature(&spec, &grid.coords(i))).map_err(geometry)?;
    let imin = (0..r.len()).fold(0, |a, i| if r[i] < r[a] { i } else { a });
    let summary = CurvatureSummary {
        coords: spec.coords().to_vec(),
        grid: dims,
        nodes: r.len(),
        min_scalar: r.iter().cloned().fold(f64::INFINITY, f64::min),
        max_scalar: r.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        max_abs_scalar: r.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
        min_scalar_at: if r.is_empty() { Vec::new() } else { grid.coords(imin) },
    };
    out.json("curvature.json", &summary)?;
    let mut header = spec.coords().to_vec();
    header.push("R".into());
    out.csv("curvature.csv", &header, (0..grid.len()).map(|i| nums(&grid.coords(i)).chain([num(r[i])]).collect()))?;
    println!("scalar curvature in [{:.6e}, {:.6e}] over {} nodes", summary.min_scalar, summary.max_scalar, summary.nodes);
    Ok(Status::Pass)
}

#[derive(Serialize)]
struct LevelSummary {
    j: usize,
    max_abs_mean_curvature: f64,
    max_second_form_sq: f64,
    min_projected_norm_sq: f64,
    degenerate_nodes: usize,
}

#[derive(Serialize)]
struct SliceSummary {
    n: usize,
    k: usize,
    x_coords: Vec<String>,
    grid: Vec<usize>,
    nodes: usize,
    min_scalar_x: f64,
    max_scalar_x: f64,
    levels: Vec<LevelSummary>,
    gauss_codazzi_max: Option<f64>,
}

pub fn slice_geometry(cfg: &mut RunConfig, out: &Out) -> Result<Status, Failure> {
    let spec = cfg.spec()?;
    let chain = chain(&spec, cfg)?;
    let d = chain.x_dim();
    let dims = cfg.grid_or(d, default_resolution(d))?;
    out.json("effective-config.json", cfg)?;
    let grid = ChartGrid::from_topology(chain.x_spec().topology(), &dims).map_err(geometry)?;
    let exts = extrinsic_on_grid(&chain, &grid).map_err(geometry)?;
    let k = chain.k();
    let gc: Option<Vec<f64>> = (k >= 2)
        .then(|| exts.iter().map(|e| gauss_codazzi_terms(e).map(|t| t.residual())).collect::<Result<_, _>>())
        .transpose()
        .map_err(geometry)?;
    let levels = (1..=k)
        .map(|j| LevelSummary {
            j,
            max_abs_mean_curvature: exts.iter().map(|e| e.level(j).surface.h.abs()).fold(0.0, f64::max),
            max_second_form_sq: exts.iter().map(|e| e.level(j).surface.a_norm_sq).fold(0.0, f64::max),
            min_projected_norm_sq: exts.iter().map(|e| e.level(j).projected_norm_sq).fold(f64::INFINITY, f64::min),
            degenerate_nodes: exts.iter().filter(|e| e.level(j).degenerate).count(),
        })
        .collect();
    let summary = SliceSummary {
        n: d + 1,
        k,
        x_coords: chain.x_spec().coords().to_vec(),
        grid: dims,
        nodes: exts.len(),
        min_scalar_x: exts.iter().map(|e| e.scalar_x).fold(f64::INFINITY, f64::min),
        max_scalar_x: exts.iter().map(|e| e.scalar_x).fold(f64::NEG_INFINITY, f64::max),
        levels,
        gauss_codazzi_max: gc.as_ref().map(|g| g.iter().cloned().fold(0.0, f64::max)),
    };
    out.json("slice-geometry.json", &summary)?;
    let mut header = chain.x_spec().coords().to_vec();
    header.push("R_X".into());
    for name in ["h", "a_norm_sq", "ric_nn", "projected_norm_sq", "degenerate"] {
        header.extend(per_level(name, 1..=k));
    }
    if gc.is_some() {
        header.push("gauss_codazzi_residual".into());
    }
    let rows = exts.iter().enumerate().map(|(i, e)| {
        let mut row: Vec<String> = nums(&e.x).collect();
        row.push(num(e.scalar_x));
        row.extend(e.levels.iter().map(|l| num(l.surface.h)));
        row.extend(e.levels.iter().map(|l| num(l.surface.a_norm_sq)));
        row.extend(e.levels.iter().map(|l| num(l.surface.ric_nn)));
        row.extend(e.levels.iter().map(|l| num(l.projected_norm_sq)));
        row.extend(e.levels.iter().map(|l| l.degenerate.to_string()));
        if let Some(g) = &gc {
            row.push(num(g[i]));
        }
        row
    });
    out.csv("slice-geometry.csv", &header, rows)?;
    if let Some(g) = summary.gauss_codazzi_max {
        println!("Gauss-Codazzi residual max {g:.3e} over {} nodes", summary.nodes);
    }
    Ok(Status::Pass)
}

pub fn angle_check(cfg: &mut RunConfig, out: &Out) -> Result<Status, Failure> {
    let spec = cfg.spec()?;
    let chain = chain(&spec, cfg)?;
    let d = chain.x_dim();
    let dims = cfg.grid_or(d, default_resolution(d))?;
    out.json("effective-config.json", cfg)?;
    let grid = ChartGrid::from_topology(chain.x_spec().topology(), &dims).map_err(geometry)?;
    let report = angle_report_from(&extrinsic_on_grid(&chain, &grid).map_err(geometry)?);
    out.json("angle-check.json", &report)?;
    let k = chain.k();
    let mut header = chain.x_spec().coords().to_vec();
    header.extend(["lhs", "rhs", "satisfied"].map(String::from));
    header.extend(per_level("degenerate", 2..=k));
    header.extend(per_level("projected_norm_sq", 1..=k));
    header.extend(per_level("coefficient_gap", 2..=k));
    let rows = report.nodes.iter().map(|nd| {
        let mut row: Vec<String> = nums(&nd.x).collect();
        row.extend([num(nd.lhs), num(nd.rhs), nd.satisfied.to_string()]);
        row.extend(nd.degenerate.iter().map(|b| b.to_string()));
        row.extend(nums(&nd.projected_norm_sq));
        row.extend(nums(&nd.coefficient_gap));
        row
    });
    out.csv("angle-check.csv", &header, rows)?;
    let verdict = serde_json::to_value(report.verdict).expect("plain enum");
    println!("angle condition {}: max lhs {} vs rhs {} ({} of {} nodes fail)", verdict.as_str().unwrap_or("?"), report.max_lhs, report.rhs, report.failing_nodes, report.nodes.len());
    Ok(Status::from(report.verdict == AngleVerdict::Satisfied))
}

#[derive(Serialize)]
struct CertificateBrief {
    min_eigenvalue: f64,
    max_q: f64,
    positive: bool,
    disagreements: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
enum SolveVerdict {
    Converged,
    NotConverged,
    NotElliptic,
}

#[derive(Serialize)]
struct SolveSummary {
    verdict: SolveVerdict,
    certificate: CertificateBrief,
    c: f64,
    eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    solve: Option<SolveReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn solve_pde(cfg: &mut RunConfig, out: &Out) -> Result<Status, Failure> {
    let spec = cfg.spec()?;
    let chain = chain(&spec, cfg)?;
    resolve_x_grid(cfg, chain.x_dim());
    out.json("effective-config.json", cfg)?;
    let pc = &cfg.pipeline;
    let prob = pde_problem(pc, &spec).map_err(pipeline)?;
    let eps = pc.eps_max.unwrap_or(0.25 * pc.circle_length);
    let cert = &prob.certificate;
    let mut summary = SolveSummary {
        verdict: SolveVerdict::NotElliptic,
        certificate: CertificateBrief {
            min_eigenvalue: cert.min_eigenvalue,
            max_q: cert.max_q,
            positive: cert.positive,
            disagreements: cert.disagreements,
        },
        c: prob.c,
        eps,
        solve: None,
        error: None,
    };
    let mut header = chain.x_spec().coords().to_vec();
    header.extend(["t", "u", "f"].map(String::from));
    let Some(op) = &prob.op else {
        out.json("solve-pde.json", &summary)?;
        out.csv("solve-pde.csv", &header, std::iter::empty())?;
        println!("ellipticity certificate failed (min symbol eigenvalue {:.3e}); pass --force to solve anyway", cert.min_eigenvalue);
        return Ok(Status::Fail);
    };
    let f = build_bump(&prob.grid, BumpSpec { c: prob.c, eps }).map_err(solver)?;
    match solve(op, &f, &pc.solver) {
        Ok(rep) => {
            let rows: Vec<Vec<String>> =
                (0..prob.grid.len()).map(|i| nums(&prob.grid.coords(i)).chain([num(rep.u[i]), num(f[i])]).collect()).collect();
            println!("converged in {} iterations, relative residual {:.3e}, u in [{:.6}, {:.6}]", rep.iterations, rep.relative_residual, rep.min_u, rep.max_u);
            summary.verdict = SolveVerdict::Converged;
            summary.solve = Some(rep);
            out.json("solve-pde.json", &summary)?;
            out.csv("solve-pde.csv", &header, rows)?;
            Ok(Status::Pass)
        }
        Err(e) => {
            summary.verdict = SolveVerdict::NotConverged;
            summary.error = Some(e.to_string());
            out.json("solve-pde.json", &summary)?;
            out.csv("solve-pde.csv", &header, std::iter::empty())?;
            Err(solver(e))
        }
    }
}

pub fn pipeline_cmd(cfg: &mut RunConfig, out: &Out) -> Result<Status, Failure> {
    let spec = cfg.spec()?;
    let chain = chain(&spec, cfg)?;
    resolve_x_grid(cfg, chain.x_dim());
    out.json("effective-config.json", cfg)?;
    let report = run_pipeline(&cfg.pipeline, &spec).map_err(pipeline)?;
    out.json("pipeline.json", &report)?;
    let mut header = chain.x_spec().coords().to_vec();
    header.extend(["R_X", "u_X", "R_tilde"].map(String::from));
    let rows = report.curvature.iter().flat_map(|c| &c.nodes).map(|nd| nums(&nd.x).chain([num(nd.r_x), num(nd.u_x), num(nd.r_tilde)]).collect());
    out.csv("pipeline.csv", &header, rows)?;
    let verdict = serde_json::to_value(report.verdict).expect("plain enum");
    match &report.curvature {
        Some(c) => println!("verdict: {} (min new scalar curvature on X {:.6})", verdict.as_str().unwrap_or("?"), c.min_r_tilde),
        None => println!("verdict: {}", verdict.as_str().unwrap_or("?")),
    }
    Ok(Status::from(report.verdict == Verdict::Success))
}

#[derive(Serialize)]
struct YamabeSummary {
    coords: Vec<String>,
    grid: Vec<usize>,
    quotient_of_one: f64,
    spectrum: SpectrumEstimate,
    positive: bool,
}

pub fn yamabe(cfg: &mut RunConfig, out: &Out) -> Result<Status, Failure> {
    let mut spec = cfg.spec()?;
    if let Some(len) = cfg.circle {
        spec = spec.with_circle("t", len).map_err(|e| Failure::input(format!("circle: {e}")))?;
    }
    let dims = cfg.grid_or(spec.dim(), default_resolution(spec.dim()))?;
    out.json("effective-config.json", cfg)?;
    let grid = ChartGrid::from_topology(spec.topology(), &dims).map_err(geometry)?;
    if !grid.is_compact() {
        return Err(Failure::input("yamabe needs a closed chart: every axis periodic or polar"));
    }
    let q = yamabe_quotient(&vec![1.0; grid.len()], &spec, &grid).map_err(solver)?;
    let est = spectrum_lower_bound(&spec, &grid, cfg.pipeline.solver.seed).map_err(solver)?;
    let r = try_map_range(ExecPolicy::default(), grid.len(), |i| scalar_curvature(&spec, &grid.coords(i))).map_err(geometry)?;
    let summary = YamabeSummary { coords: spec.coords().to_vec(), grid: dims, quotient_of_one: q, spectrum: est, positive: est.lambda > 0.0 };
    out.json("yamabe.json", &summary)?;
    let mut header = spec.coords().to_vec();
    header.push("R".into());
    out.csv("yamabe.csv", &header, (0..grid.len()).map(|i| nums(&grid.coords(i)).chain([num(r[i])]).collect()))?;
    println!("E(1) = {q:.6e}, conformal Laplacian spectrum bound {:.6}", est.lambda);
    Ok(Status::from(summary.positive))
}

#[derive(Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
enum ExampleVerdict {
    Reproduced,
    NotReproduced,
}

#[derive(Serialize)]
struct ExampleSummary {
    a: f64,
    n: usize,
    plane_grid: Vec<usize>,
    plane_extent: [[f64; 2]; 2],
    gauss_curvature_min: f64,
    gauss_curvature_max: f64,
    gauss_curvature_bound: f64,
    gauss_curvature_origin: f64,
    angle_lhs_origin: f64,
    angle_rhs: f64,
    failing_nodes: usize,
    nodes: usize,
    pipeline_verdict: Verdict,
    verdict: ExampleVerdict,
}

fn line_extent(spec: &MetricSpec, i: usize) -> Result<[f64; 2], Failure> {
    match spec.topology()[i] {
        Topology::Line { lo, hi } => Ok([lo, hi]),
        _ => Err(Failure::input(format!("'{}' is not a line coordinate", spec.coords()[i]))),
    }
}

pub fn reproduce_example(cfg: &mut RunConfig, out: &Out) -> Result<Status, Failure> {
    const FAMILY: &str = "example-2-1";
    if cfg.metric.is_some() || cfg.family.as_deref().is_some_and(|f| f != FAMILY) {
        return Err(Failure::input(format!("reproduce-example-2-1 runs the '{FAMILY}' family only")));
    }
    cfg.family = Some(FAMILY.into());
    let spec = cfg.spec()?;
    let defaults = registry::defaults(FAMILY).expect("registered");
    let a = cfg.params.get("a").copied().unwrap_or(defaults["a"]);
    let plane = cfg.grid_or(2, 64)?;
    let d = spec.x_dim();
    if cfg.pipeline.x_grid.len() != d {
        cfg.pipeline.x_grid = vec![default_resolution(d); d];
    }
    out.json("effective-config.json", cfg)?;

    let iz = spec.coord_index("zeta").expect("family coordinate");
    let ix = spec.coord_index("xi").expect("family coordinate");
    let (ez, ex) = (line_extent(&spec, iz)?, line_extent(&spec, ix)?);
    let at = |e: [f64; 2], i: usize, m: usize| e[0] + (e[1] - e[0]) * i as f64 / (m - 1).max(1) as f64;
    let x0 = vec![0.0; d];
    let point = |zeta: f64, xi: f64| {
        let mut p = vec![0.0; spec.dim()];
        p[iz] = zeta;
        p[ix] = xi;
        p
    };
    let node = |zeta: f64, xi: f64| -> Result<(f64, psc_core::angle::AngleTerms), GeometryError> {
        let k = brioschi_k(&metric_at(&spec, &point(zeta, xi))?, iz, ix);
        let chain = SliceChain::at(&spec, &[zeta, xi])?;
        Ok((k, angle_lhs(&extrinsic_at(&chain, &x0)?, None)))
    };
    let (m1, m2) = (plane[0], plane[1]);
    let coords: Vec<(f64, f64)> = (0..m1 * m2).map(|i| (at(ez, i / m2, m1), at(ex, i % m2, m2))).collect();
    let vals = map_range(ExecPolicy::default(), coords.len(), |i| node(coords[i].0, coords[i].1));
    let vals: Vec<_> = vals.into_iter().collect::<Result<_, _>>().map_err(geometry)?;
    let (k0, t0) = node(0.0, 0.0).map_err(geometry)?;
    let bound = a * a / (4.0 * (a * a - 1.0).powi(2));
    let kmin = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let kmax = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let failing = vals.iter().filter(|v| !v.1.satisfied).count();

    let report = run_pipeline(&cfg.pipeline, &spec).map_err(pipeline)?;
    out.json("pipeline.json", &report)?;
    let reproduced = kmin > 0.0 && kmax < bound && failing == vals.len() && report.verdict == Verdict::AngleFail;
    let summary = ExampleSummary {
        a,
        n: d + 1,
        plane_grid: plane,
        plane_extent: [ez, ex],
        gauss_curvature_min: kmin,
        gauss_curvature_max: kmax,
        gauss_curvature_bound: bound,
        gauss_curvature_origin: k0,
        angle_lhs_origin: t0.lhs,
        angle_rhs: t0.rhs,
        failing_nodes: failing,
        nodes: vals.len(),
        pipeline_verdict: report.verdict,
        verdict: if reproduced { ExampleVerdict::Reproduced } else { ExampleVerdict::NotReproduced },
    };
    out.json("example-2-1.json", &summary)?;
    let header = ["zeta", "xi", "K", "lhs", "rhs", "satisfied"].map(String::from);
    let rows = coords.iter().zip(&vals).map(|((z, x), (k, t))| vec![num(*z), num(*x), num(*k), num(t.lhs), num(t.rhs), t.satisfied.to_string()]);
    out.csv("example-2-1.csv", &header, rows)?;
    println!(
        "K in [{kmin:.6e}, {kmax:.6e}] (bound {bound:.6e}), K(0,0) = {k0:.12}, lhs(0) = {} vs rhs {}, {failing}/{} nodes fail",
        t0.lhs,
        t0.rhs,
        vals.len()
    );
    Ok(Status::from(reproduced))
}
