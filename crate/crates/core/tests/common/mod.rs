#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use psc_core::dsl::{parse_expression, CompiledExpr};
use psc_core::geometry::{Axis, ChartGrid, StencilOrder};
use psc_core::solver::{assemble, solve, NodeCoefficients, SolverConfig};

pub fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Constant-coefficient operator on the flat T^2 x S^1 (all periods 2 pi):
/// 6 d_V d_V - 4 Lap + 1 with V = (0.3, 0.2). The unit potential keeps it
/// invertible, which the flat zero potential would not.
pub fn mms_coefficients() -> NodeCoefficients {
    let v = [0.3, 0.2];
    let mut a = vec![0.0; 9];
    for i in 0..2 {
        for j in 0..2 {
            a[i * 3 + j] = 6.0 * v[i] * v[j] - if i == j { 4.0 } else { 0.0 };
        }
    }
    a[8] = -4.0;
    NodeCoefficients { a, b: vec![0.0; 3], c: 1.0 }
}

pub const MMS_SOLUTION: &str = "sin(x)*cos(2*y) + 0.5*cos(t)*sin(y) + 0.2*sin(x + t)";

/// Max-norm error of the discrete solve against the manufactured solution on
/// an n^3 grid; the right-hand side is the operator applied to exact jets.
pub fn mms_error(n: usize) -> f64 {
    let g = ChartGrid::new(vec![Axis::periodic(0.0, 2.0 * PI, n), Axis::periodic(0.0, 2.0 * PI, n)])
        .unwrap()
        .with_circle(2.0 * PI, n)
        .unwrap();
    let nc = mms_coefficients();
    let op = assemble(&g, StencilOrder::Second, |_| Ok(nc.clone()), vec![]).unwrap();
    let names: Vec<String> = ["x", "y", "t"].iter().map(|s| s.to_string()).collect();
    let u = CompiledExpr::new(&parse_expression(MMS_SOLUTION).unwrap(), &names).unwrap();
    let mut exact = Vec::with_capacity(g.len());
    let mut f = Vec::with_capacity(g.len());
    for node in 0..g.len() {
        let j = u.eval_jet2(&g.coords(node)).unwrap();
        f.push(nc.apply(j.value, &j.grad, &j.hessian_full()));
        exact.push(j.value);
    }
    let cfg = SolverConfig { krylov: psc_core::solver::KrylovConfig { tol: 1e-12, max_iter: 20000 }, ..Default::default() };
    let sol = solve(&op, &f, &cfg).unwrap();
    sol.u.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
