//! Random smooth expressions and a finite-difference audit of the jet path.

use rand::Rng;

use super::eval::CompiledExpr;
use super::parser::{BinOp, Expr, Func};
use super::DslError;

/// A random expression in `vars`, smooth and finite on [-1, 1]^d. Every
/// division, logarithm and square root is guarded by a shift that keeps its
/// argument at least 1/2 away from the singular set.
pub fn random_expr<R: Rng>(rng: &mut R, vars: &[String], depth: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.7) {
            Expr::var(&vars[rng.gen_range(0..vars.len())])
        } else {
            Expr::num((rng.gen_range(0.5..2.0f64) * 100.0).round() / 100.0)
        };
    }
    let sub = |rng: &mut R| random_expr(rng, vars, depth - 1);
    let bounded = |rng: &mut R| Expr::call(Func::Sin, random_expr(rng, vars, depth - 1));
    match rng.gen_range(0..12) {
        0 => Expr::bin(BinOp::Add, sub(rng), sub(rng)),
        1 => Expr::bin(BinOp::Sub, sub(rng), sub(rng)),
        2 | 3 => Expr::bin(BinOp::Mul, sub(rng), sub(rng)),
        4 => Expr::bin(BinOp::Div, sub(rng), Expr::bin(BinOp::Add, Expr::num(1.5), bounded(rng))),
        5 => Expr::bin(BinOp::Pow, bounded(rng), Expr::num(rng.gen_range(2..4) as f64)),
        6 => Expr::call(if rng.gen_bool(0.5) { Func::Sin } else { Func::Cos }, sub(rng)),
        7 => Expr::call(Func::Exp, bounded(rng)),
        8 => Expr::call(Func::Log, Expr::bin(BinOp::Add, Expr::num(2.0), bounded(rng))),
        9 => Expr::call(
            Func::Sqrt,
            Expr::bin(BinOp::Add, Expr::num(1.0), Expr::bin(BinOp::Pow, bounded(rng), Expr::num(2.0))),
        ),
        10 => Expr::call([Func::Tanh, Func::Sinh, Func::Cosh][rng.gen_range(0..3)], bounded(rng)),
        _ => Expr::call(Func::Tan, Expr::bin(BinOp::Mul, Expr::num(0.5), bounded(rng))),
    }
}

/// Largest relative gap between the jet derivatives and central differences
/// (gradient step `h1`, Hessian step `h2`), each scaled by max(1, |fd|).
pub fn jet_fd_gap(f: &CompiledExpr, point: &[f64], h1: f64, h2: f64) -> Result<f64, DslError> {
    let n = point.len();
    let jet = f.eval_jet2(point)?;
    let at = |shift: &[(usize, f64)]| -> Result<f64, DslError> {
        let mut p = point.to_vec();
        for (i, s) in shift {
            p[*i] += s;
        }
        f.eval(&p)
    };
    let rel = |ad: f64, fd: f64| (ad - fd).abs() / fd.abs().max(1.0);
    let f0 = jet.value;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let g = (at(&[(i, h1)])? - at(&[(i, -h1)])?) / (2.0 * h1);
        worst = worst.max(rel(jet.grad[i], g));
        let hii = (at(&[(i, h2)])? - 2.0 * f0 + at(&[(i, -h2)])?) / (h2 * h2);
        worst = worst.max(rel(jet.h(i, i), hii));
        for j in i + 1..n {
            let hij = (at(&[(i, h2), (j, h2)])? - at(&[(i, h2), (j, -h2)])? - at(&[(i, -h2), (j, h2)])?
                + at(&[(i, -h2), (j, -h2)])?)
                / (4.0 * h2 * h2);
            worst = worst.max(rel(jet.h(i, j), hij));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_are_finite_on_the_box() {
        let vars: Vec<String> = ["x", "y"].iter().map(|s| s.to_string()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let e = random_expr(&mut rng, &vars, 4);
            let c = CompiledExpr::new(&e, &vars).unwrap();
            let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            assert!(c.eval(&p).unwrap().is_finite(), "{e}");
        }
    }

    #[test]
    fn polynomial_gap_is_tiny() {
        let vars: Vec<String> = vec!["x".into(), "y".into()];
        let e = super::super::parse_expression("x^2*y + 3*x*y^2").unwrap();
        let c = CompiledExpr::new(&e, &vars).unwrap();
        assert!(jet_fd_gap(&c, &[0.3, -0.4], 1e-5, 1e-4).unwrap() < 1e-7);
    }
}
