use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use psc_core::angle::extrinsic_on_grid;
use psc_core::geometry::{ChartGrid, StencilOrder};
use psc_core::hypersurface::SliceChain;
use psc_core::par::ExecPolicy;
use psc_core::registry::build;
use psc_core::solver::{assemble, build_bump, pde_coefficients, solve_with, BumpSpec, CoefField, DiscreteOperator, SolverConfig};

fn operator(m: usize, nt: usize) -> DiscreteOperator {
    let spec = build("perturbed-product", &Default::default(), None).unwrap();
    let chain = SliceChain::standard(&spec).unwrap();
    let x = ChartGrid::from_topology(chain.x_spec().topology(), &[m, m]).unwrap();
    let coeffs: Vec<_> = extrinsic_on_grid(&chain, &x)
        .unwrap()
        .iter()
        .map(|e| {
            let fields = vec![CoefField { coef: 4.0, v: e.level(1).v.clone() }];
            pde_coefficients(&e.gx, &e.gx.christoffel(), &fields, e.scalar_full())
        })
        .collect();
    let w = x.with_circle(0.5, nt).unwrap();
    assemble(&w, StencilOrder::Second, |i| Ok(coeffs[i / nt].clone()), vec![]).unwrap()
}

const POLICIES: [(&str, ExecPolicy); 2] = [("sequential", ExecPolicy::Sequential), ("parallel", ExecPolicy::Parallel)];

fn matvec(c: &mut Criterion) {
    let op = operator(64, 32);
    let x: Vec<f64> = (0..op.matrix.n).map(|i| (i as f64 * 1e-3).sin()).collect();
    let mut y = vec![0.0; op.matrix.n];
    let mut g = c.benchmark_group("csr_matvec_64x64x32");
    for (name, policy) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| op.matrix.matvec_into(policy, black_box(&x), &mut y))
        });
    }
    g.finish();
}

fn bicgstab(c: &mut Criterion) {
    let op = operator(32, 32);
    let f = build_bump(&op.grid, BumpSpec { c: 4.0, eps: 0.0625 }).unwrap();
    let cfg = SolverConfig::default();
    let mut g = c.benchmark_group("bicgstab_32x32x32");
    g.sample_size(10);
    for (name, policy) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solve_with(&op, black_box(&f), &cfg, policy).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, matvec, bicgstab);
criterion_main!(benches);
