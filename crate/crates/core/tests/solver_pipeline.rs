mod common;

use common::{mms_error, params};
use psc_core::angle::{angle_report_from, extrinsic_on_grid, symbol_fields};
use psc_core::geometry::{ChartGrid, StencilOrder};
use psc_core::hypersurface::SliceChain;
use psc_core::par::ExecPolicy;
use psc_core::pipeline::{direct_r_tilde, run_pipeline, PipelineConfig, Verdict};
use psc_core::registry::build;
use psc_core::solver::{assemble, build_bump, pde_coefficients, solve_with, BumpSpec, CoefField, DiscreteOperator, SolverConfig};

#[test]
fn manufactured_solution_converges_at_second_order() {
    let e16 = mms_error(16);
    let e32 = mms_error(32);
    let ratio = e16 / e32;
    assert!((3.4..=4.6).contains(&ratio), "errors {e16:.3e} {e32:.3e} ratio {ratio:.3}");
}

/// The pipeline operator of a perturbed round S^2 + R^2 on a small W grid.
fn product_operator(m: usize, nt: usize) -> (DiscreteOperator, Vec<f64>) {
    let spec = build("perturbed-product", &params(&[("amp", 0.2)]), None).unwrap();
    let chain = SliceChain::standard(&spec).unwrap();
    let x = ChartGrid::from_topology(chain.x_spec().topology(), &[m, m]).unwrap();
    let exts = extrinsic_on_grid(&chain, &x).unwrap();
    let flags: Vec<bool> = angle_report_from(&exts).branch.iter().map(|b| b.unwrap_or(false)).collect();
    let coeffs: Vec<_> = exts
        .iter()
        .map(|e| {
            let fields: Vec<CoefField> =
                symbol_fields(e, &flags).into_iter().map(|f| CoefField { coef: 4.0 * f.weight, v: f.v }).collect();
            pde_coefficients(&e.gx, &e.gx.christoffel(), &fields, e.scalar_full())
        })
        .collect();
    let w = x.with_circle(0.5, nt).unwrap();
    let op = assemble(&w, StencilOrder::Second, |i| Ok(coeffs[i / nt].clone()), vec![]).unwrap();
    let scalar = exts.iter().map(|e| e.scalar_full()).collect();
    (op, scalar)
}

#[test]
fn operator_potential_is_the_ambient_scalar_curvature() {
    let nt = 16;
    let (op, scalar) = product_operator(12, nt);
    let ones = vec![1.0; op.matrix.n];
    let l1 = op.matrix.matvec(ExecPolicy::Sequential, &ones);
    for (w, v) in l1.iter().enumerate() {
        assert!((v - scalar[w / nt]).abs() < 1e-10);
        assert_eq!(op.potential[w], scalar[w / nt]);
    }
}

#[test]
fn nonnegative_data_gives_nonnegative_solution() {
    let (op, _) = product_operator(16, 16);
    let f = build_bump(&op.grid, BumpSpec { c: 4.0, eps: 0.125 }).unwrap();
    assert!(f.iter().all(|v| *v >= 0.0));
    let cfg = SolverConfig::default();
    let u = solve_with(&op, &f, &cfg, ExecPolicy::Sequential).unwrap();
    assert!(u.min_u >= -1e-8, "{}", u.min_u);
    // assembling the data in reverse node order changes nothing
    let bump = BumpSpec { c: 4.0, eps: 0.125 };
    let ta = op.grid.dim() - 1;
    let mut rev = vec![0.0; f.len()];
    for i in (0..f.len()).rev() {
        rev[i] = bump.value(op.grid.coords(i)[ta]);
    }
    let again = solve_with(&op, &rev, &cfg, ExecPolicy::Parallel).unwrap();
    let gap = u.u.iter().zip(&again.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap <= 1e-12);
}

#[test]
fn unit_factor_is_the_identity() {
    let spec = build("perturbed-product", &params(&[]), None).unwrap();
    let chain = SliceChain::standard(&spec).unwrap();
    let x = ChartGrid::from_topology(chain.x_spec().topology(), &[16, 16]).unwrap();
    let rt = direct_r_tilde(chain.x_spec(), &x, &vec![1.0; x.len()], StencilOrder::Second).unwrap();
    let exts = extrinsic_on_grid(&chain, &x).unwrap();
    for (a, e) in rt.iter().zip(&exts) {
        assert!((a - e.scalar_x).abs() < 1e-12);
    }
}

#[test]
fn success_survives_resolution_doubling() {
    for (family, kappa0) in [("product", 2.0), ("perturbed-product", 1.0)] {
        let spec = build(family, &params(&[]), None).unwrap();
        let mut signs = Vec::new();
        for m in [16, 32] {
            let cfg = PipelineConfig { kappa0, x_grid: vec![m, m], ..Default::default() };
            let r = run_pipeline(&cfg, &spec).unwrap();
            assert_eq!(r.verdict, Verdict::Success, "{family} at {m}");
            signs.push(r.curvature.unwrap().min_r_tilde > 0.0);
        }
        assert_eq!(signs[0], signs[1]);
    }
}

#[test]
fn strong_data_trips_the_factor_bounds() {
    let spec = build("product", &params(&[]), None).unwrap();
    let cfg = PipelineConfig { x_grid: vec![16, 16], retries: 0, ..Default::default() };
    let r = run_pipeline(&cfg, &spec).unwrap();
    assert_eq!(r.verdict, Verdict::GateFail);
    assert!(r.attempts[0].gates.u_w_max > 1.5);
}
