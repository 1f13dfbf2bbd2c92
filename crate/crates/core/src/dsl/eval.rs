use super::jet::Jet2;
use super::parser::{BinOp, Expr, Func};
use super::DslError;

/// Expression with variables resolved to coordinate indices.
#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// An expression bound to an ordered coordinate list, ready for jet evaluation.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    source: Expr,
    root: Node,
    names: Vec<String>,
}

fn lower(e: &Expr, names: &[String]) -> Result<Node, DslError> {
    Ok(match e {
        Expr::Num(v) => Node::Num(*v),
        Expr::Var(v) => Node::Var(
            names
                .iter()
                .position(|n| n == v)
                .ok_or_else(|| DslError::UndeclaredVariable { name: v.clone() })?,
        ),
        Expr::Neg(e) => Node::Neg(Box::new(lower(e, names)?)),
        Expr::Bin(op, l, r) => Node::Bin(*op, Box::new(lower(l, names)?), Box::new(lower(r, names)?)),
        Expr::Call(f, e) => Node::Call(*f, Box::new(lower(e, names)?)),
    })
}

fn raise(node: &Node, names: &[String]) -> Expr {
    match node {
        Node::Num(v) => Expr::Num(*v),
        Node::Var(i) => Expr::Var(names[*i].clone()),
        Node::Neg(e) => Expr::Neg(Box::new(raise(e, names))),
        Node::Bin(op, l, r) => Expr::bin(*op, raise(l, names), raise(r, names)),
        Node::Call(f, e) => Expr::call(*f, raise(e, names)),
    }
}

impl CompiledExpr {
    pub fn new(expr: &Expr, names: &[String]) -> Result<CompiledExpr, DslError> {
        Ok(CompiledExpr { source: expr.clone(), root: lower(expr, names)?, names: names.to_vec() })
    }

    pub fn source(&self) -> &Expr {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn eval_jet2(&self, point: &[f64]) -> Result<Jet2, DslError> {
        assert_eq!(point.len(), self.names.len(), "point dimension mismatch");
        self.eval_node(&self.root, point)
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, DslError> {
        self.eval_value(&self.root, point)
    }

    fn domain(&self, node: &Node, what: &str) -> DslError {
        DslError::Domain { what: what.to_string(), subexpr: raise(node, &self.names).to_string() }
    }

    fn eval_value(&self, node: &Node, p: &[f64]) -> Result<f64, DslError> {
        Ok(match node {
            Node::Num(v) => *v,
            Node::Var(i) => p[*i],
            Node::Neg(e) => -self.eval_value(e, p)?,
            Node::Bin(op, l, r) => {
                let a = self.eval_value(l, p)?;
                let b = self.eval_value(r, p)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(self.domain(node, "division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let r = a.powf(b);
                        if !r.is_finite() {
                            return Err(self.domain(node, "power outside its real domain"));
                        }
                        r
                    }
                }
            }
            Node::Call(f, e) => {
                let a = self.eval_value(e, p)?;
                let (v, _, _) = self.scalar(*f, a, node)?;
                v
            }
        })
    }

    /// Value and first two derivatives of a library function at `a`.
    fn scalar(&self, f: Func, a: f64, node: &Node) -> Result<(f64, f64, f64), DslError> {
        Ok(match f {
            Func::Exp => {
                let e = a.exp();
                (e, e, e)
            }
            Func::Log => {
                if a <= 0.0 {
                    return Err(self.domain(node, "log of a non-positive value"));
                }
                (a.ln(), 1.0 / a, -1.0 / (a * a))
            }
            Func::Sin => (a.sin(), a.cos(), -a.sin()),
            Func::Cos => (a.cos(), -a.sin(), -a.cos()),
            Func::Tan => {
                let c = a.cos();
                if c == 0.0 {
                    return Err(self.domain(node, "tan at a pole"));
                }
                let t = a.tan();
                let s2 = 1.0 + t * t;
                (t, s2, 2.0 * t * s2)
            }
            Func::Sinh => (a.sinh(), a.cosh(), a.sinh()),
            Func::Cosh => (a.cosh(), a.sinh(), a.cosh()),
            Func::Tanh => {
                let t = a.tanh();
                let s2 = 1.0 - t * t;
                (t, s2, -2.0 * t * s2)
            }
            Func::Sqrt => {
                if a <= 0.0 {
                    return Err(self.domain(node, "sqrt of a non-positive value"));
                }
                let s = a.sqrt();
                (s, 0.5 / s, -0.25 / (s * a))
            }
            // subgradient 0 at the kink
            Func::Abs => (a.abs(), if a > 0.0 { 1.0 } else if a < 0.0 { -1.0 } else { 0.0 }, 0.0),
        })
    }

    fn eval_node(&self, node: &Node, p: &[f64]) -> Result<Jet2, DslError> {
        let n = p.len();
        Ok(match node {
            Node::Num(v) => Jet2::constant(n, *v),
            Node::Var(i) => Jet2::variable(n, *i, p[*i]),
            Node::Neg(e) => -&self.eval_node(e, p)?,
            Node::Bin(op, l, r) => {
                let a = self.eval_node(l, p)?;
                let b = self.eval_node(r, p)?;
                match op {
                    BinOp::Add => &a + &b,
                    BinOp::Sub => &a - &b,
                    BinOp::Mul => &a * &b,
                    BinOp::Div => {
                        if b.value == 0.0 {
                            return Err(self.domain(node, "division by zero"));
                        }
                        &a * &b.recip()
                    }
                    BinOp::Pow => self.pow(&a, &b, node)?,
                }
            }
            Node::Call(f, e) => {
                let a = self.eval_node(e, p)?;
                let (v, d1, d2) = self.scalar(*f, a.value, node)?;
                a.chain(v, d1, d2)
            }
        })
    }

    fn pow(&self, a: &Jet2, b: &Jet2, node: &Node) -> Result<Jet2, DslError> {
        if b.is_constant() {
            let k = b.value;
            let x = a.value;
            let integral = k.fract() == 0.0 && k.abs() < 1e9;
            if x == 0.0 {
                // derivatives of x^k at 0 exist up to order 2 only for k = 0, 1 or k >= 2
                if integral && (k == 0.0 || k == 1.0 || k >= 2.0) {
                    let d1 = if k == 1.0 { 1.0 } else { 0.0 };
                    let d2 = if k == 2.0 { 2.0 } else { 0.0 };
                    return Ok(a.chain(if k == 0.0 { 1.0 } else { 0.0 }, d1, d2));
                }
                return Err(self.domain(node, "power of zero is not twice differentiable"));
            }
            if x < 0.0 && !integral {
                return Err(self.domain(node, "non-integer power of a negative value"));
            }
            let v = if integral { x.powi(k as i32) } else { x.powf(k) };
            let d1 = if integral { k * x.powi(k as i32 - 1) } else { k * x.powf(k - 1.0) };
            let d2 = if integral {
                k * (k - 1.0) * x.powi(k as i32 - 2)
            } else {
                k * (k - 1.0) * x.powf(k - 2.0)
            };
            return Ok(a.chain(v, d1, d2));
        }
        if a.value <= 0.0 {
            return Err(self.domain(node, "variable exponent on a non-positive base"));
        }
        // a^b = exp(b log a)
        let la = a.chain(a.value.ln(), 1.0 / a.value, -1.0 / (a.value * a.value));
        let e = &la * b;
        let v = e.value.exp();
        Ok(e.chain(v, v, v))
    }
}

/// Convenience: bind and evaluate in one call.
pub fn eval_jet2(expr: &Expr, names: &[String], point: &[f64]) -> Result<Jet2, DslError> {
    CompiledExpr::new(expr, names)?.eval_jet2(point)
}

#[cfg(test)]
mod tests {
    use super::super::parser::parse_expression;
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn square_at_three() {
        let j = eval_jet2(&parse_expression("x^2").unwrap(), &names(&["x"]), &[3.0]).unwrap();
        assert_eq!((j.value, j.grad[0], j.h(0, 0)), (9.0, 6.0, 2.0));
    }

    #[test]
    fn logistic_product_at_origin() {
        let e = parse_expression("1/((1+exp(-xi))*(1+exp(-zeta)))").unwrap();
        let j = eval_jet2(&e, &names(&["xi", "zeta"]), &[0.0, 0.0]).unwrap();
        assert!((j.value - 0.25).abs() < 1e-15);
        assert!((j.grad[0] - 0.125).abs() < 1e-15);
        assert!((j.grad[1] - 0.125).abs() < 1e-15);
        // d2/dxi dzeta = s'(0)^2 = 1/16; d2/dxi2 = s''(0) s(0) = 0
        assert!((j.h(0, 1) - 0.0625).abs() < 1e-15);
        assert!(j.h(0, 0).abs() < 1e-15);
    }

    #[test]
    fn gradient_length_matches_coords() {
        let j = eval_jet2(&parse_expression("2").unwrap(), &names(&["a", "b", "c"]), &[0.0; 3]).unwrap();
        assert_eq!(j.grad.len(), 3);
        assert_eq!(j.hess.len(), 6);
    }

    #[test]
    fn domain_errors_name_subexpression() {
        let e = parse_expression("x + log(x - 1)").unwrap();
        match eval_jet2(&e, &names(&["x"]), &[0.5]) {
            Err(DslError::Domain { subexpr, .. }) => assert_eq!(subexpr, "log(x - 1)"),
            other => panic!("{other:?}"),
        }
        let e = parse_expression("1 / (x - 2)").unwrap();
        match eval_jet2(&e, &names(&["x"]), &[2.0]) {
            Err(DslError::Domain { subexpr, .. }) => assert_eq!(subexpr, "1 / (x - 2)"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn undeclared_variable() {
        let e = parse_expression("x * y").unwrap();
        assert!(matches!(CompiledExpr::new(&e, &names(&["x"])), Err(DslError::UndeclaredVariable { .. })));
    }

    #[test]
    fn negative_base_integer_power() {
        let j = eval_jet2(&parse_expression("x^3").unwrap(), &names(&["x"]), &[-2.0]).unwrap();
        assert_eq!((j.value, j.grad[0], j.h(0, 0)), (-8.0, 12.0, -12.0));
        assert!(eval_jet2(&parse_expression("x^0.5").unwrap(), &names(&["x"]), &[-2.0]).is_err());
    }

    #[test]
    fn variable_exponent() {
        // x^y at (2, 3): d/dx = 12, d/dy = 8 ln 2
        let j = eval_jet2(&parse_expression("x^y").unwrap(), &names(&["x", "y"]), &[2.0, 3.0]).unwrap();
        assert!((j.value - 8.0).abs() < 1e-12);
        assert!((j.grad[0] - 12.0).abs() < 1e-12);
        assert!((j.grad[1] - 8.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn value_path_agrees_with_jet_path() {
        let e = CompiledExpr::new(&parse_expression("sin(x)*exp(y)/(2+cos(x*y))").unwrap(), &names(&["x", "y"]))
            .unwrap();
        let p = [0.3, -1.1];
        assert_eq!(e.eval(&p).unwrap(), e.eval_jet2(&p).unwrap().value);
    }
}
