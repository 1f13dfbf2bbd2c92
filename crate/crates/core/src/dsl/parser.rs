use std::fmt;

use super::lexer::{tokenize, Spanned, Token};
use super::DslError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Exp,
        Func::Log,
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => " + ",
            BinOp::Sub => " - ",
            BinOp::Mul => " * ",
            BinOp::Div => " / ",
            BinOp::Pow => "^",
        }
    }

    fn prec(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// Expression tree. Numeric literals produced by the parser are never negative;
/// negation is always an explicit `Neg` node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Literal that keeps the "no negative literal" shape.
    pub fn num(v: f64) -> Expr {
        if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
            Expr::Neg(Box::new(Expr::Num(-v)))
        } else {
            Expr::Num(v)
        }
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    pub fn call(f: Func, e: Expr) -> Expr {
        Expr::Call(f, Box::new(e))
    }

    /// Replaces every occurrence of variable `name` by the constant `value`.
    pub fn substitute(&self, name: &str, value: f64) -> Expr {
        match self {
            Expr::Var(v) if v == name => Expr::num(value),
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(name, value))),
            Expr::Bin(op, l, r) => Expr::bin(*op, l.substitute(name, value), r.substitute(name, value)),
            Expr::Call(f, e) => Expr::call(*f, e.substitute(name, value)),
        }
    }

    pub fn variables(&self, out: &mut Vec<String>) {
        match self {
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Expr::Num(_) => {}
            Expr::Neg(e) | Expr::Call(_, e) => e.variables(out),
            Expr::Bin(_, l, r) => {
                l.variables(out);
                r.variables(out);
            }
        }
    }

    pub fn is_zero_literal(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Bin(op, _, _) => op.prec(),
            Expr::Neg(_) => 3,
            _ => 5,
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // shortest round-trip form; exponent notation only far from 1
            Expr::Num(v) if *v == 0.0 || (1e-4..1e16).contains(&v.abs()) => write!(f, "{v}"),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_wrapped(f, e, e.prec() <= 2)
            }
            Expr::Call(func, e) => {
                write!(f, "{}(", func.name())?;
                e.write(f)?;
                f.write_str(")")
            }
            Expr::Bin(op, l, r) => {
                let p = op.prec();
                let left_paren = l.prec() < p || (*op == BinOp::Pow && l.prec() <= p);
                let right_paren = r.prec() < p || (*op != BinOp::Pow && r.prec() == p);
                write_wrapped(f, l, left_paren)?;
                f.write_str(op.symbol())?;
                write_wrapped(f, r, right_paren)
            }
        }
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        f.write_str("(")?;
        e.write(f)?;
        f.write_str(")")
    } else {
        e.write(f)
    }
}

/// Prints with the minimum parentheses needed to reparse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f)
    }
}

pub fn print(e: &Expr) -> String {
    e.to_string()
}

const BP_ADD: u8 = 10;
const BP_MUL: u8 = 20;
const BP_NEG: u8 = 30;
const BP_POW: u8 = 40;

struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Spanned> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<&'a Spanned, DslError> {
        let t = self.toks.get(self.pos).ok_or(DslError::UnexpectedEnd { offset: self.end })?;
        self.pos += 1;
        Ok(t)
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, DslError> {
        let mut lhs = self.prefix()?;
        while let Some(t) = self.peek() {
            let (op, lbp, rbp) = match t.token {
                Token::Plus => (BinOp::Add, BP_ADD, BP_ADD + 1),
                Token::Minus => (BinOp::Sub, BP_ADD, BP_ADD + 1),
                Token::Star => (BinOp::Mul, BP_MUL, BP_MUL + 1),
                Token::Slash => (BinOp::Div, BP_MUL, BP_MUL + 1),
                Token::Caret => (BinOp::Pow, BP_POW, BP_POW - 1),
                Token::RParen => break,
                _ => return Err(unexpected(t)),
            };
            if lbp < min_bp {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(rbp)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, DslError> {
        let t = self.next()?;
        match &t.token {
            Token::Num(v) => Ok(Expr::Num(*v)),
            Token::Minus => Ok(Expr::Neg(Box::new(self.expr(BP_NEG)?))),
            Token::LParen => {
                let e = self.expr(0)?;
                self.expect_rparen()?;
                Ok(e)
            }
            Token::Ident(name) => {
                let is_call = matches!(self.peek(), Some(Spanned { token: Token::LParen, .. }));
                if !is_call {
                    return Ok(Expr::Var(name.clone()));
                }
                let func = Func::from_name(name)
                    .ok_or_else(|| DslError::UnknownFunction { offset: t.offset, name: name.clone() })?;
                self.pos += 1;
                let arg = self.expr(0)?;
                self.expect_rparen()?;
                Ok(Expr::call(func, arg))
            }
            _ => Err(unexpected(t)),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), DslError> {
        let t = self.next()?;
        match t.token {
            Token::RParen => Ok(()),
            _ => Err(unexpected(t)),
        }
    }
}

fn unexpected(t: &Spanned) -> DslError {
    DslError::UnexpectedToken { offset: t.offset, found: describe(&t.token) }
}

fn describe(t: &Token) -> String {
    match t {
        Token::Num(v) => format!("number {v}"),
        Token::Ident(s) => format!("identifier '{s}'"),
        Token::Plus => "'+'".into(),
        Token::Minus => "'-'".into(),
        Token::Star => "'*'".into(),
        Token::Slash => "'/'".into(),
        Token::Caret => "'^'".into(),
        Token::LParen => "'('".into(),
        Token::RParen => "')'".into(),
    }
}

/// Pratt parse of a complete token stream. Precedence from tightest:
/// `^` (right-assoc), unary `-`, `* /`, `+ -`.
pub fn parse_tokens(toks: &[Spanned], end: usize) -> Result<Expr, DslError> {
    let mut p = Parser { toks, pos: 0, end };
    let e = p.expr(0)?;
    if let Some(t) = p.peek() {
        return Err(unexpected(t));
    }
    Ok(e)
}

pub fn parse_expression(src: &str) -> Result<Expr, DslError> {
    parse_tokens(&tokenize(src)?, src.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expression(s).unwrap()
    }

    fn fold(e: &Expr) -> f64 {
        match e {
            Expr::Num(v) => *v,
            Expr::Neg(e) => -fold(e),
            Expr::Bin(op, l, r) => {
                let (a, b) = (fold(l), fold(r));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            _ => panic!("not constant"),
        }
    }

    #[test]
    fn power_is_right_associative() {
        assert_eq!(fold(&p("2^3^2")), 512.0);
    }

    #[test]
    fn precedence_golden() {
        assert_eq!(fold(&p("1 + 2 * 3")), 7.0);
        assert_eq!(fold(&p("10 - 4 - 3")), 3.0);
        assert_eq!(fold(&p("64 / 4 / 2")), 8.0);
        assert_eq!(fold(&p("-2^2")), -4.0);
        assert_eq!(fold(&p("(-2)^2")), 4.0);
        assert_eq!(fold(&p("2^-1")), 0.5);
        assert_eq!(fold(&p("-3 * 2")), -6.0);
        assert_eq!(fold(&p("2 * -3")), -6.0);
        assert_eq!(fold(&p("--3")), 3.0);
    }

    #[test]
    fn neg_binds_looser_than_pow() {
        assert_eq!(
            p("-x^2"),
            Expr::Neg(Box::new(Expr::bin(BinOp::Pow, Expr::var("x"), Expr::Num(2.0))))
        );
    }

    #[test]
    fn empty_call_is_unexpected_token() {
        match parse_expression("sin()") {
            Err(DslError::UnexpectedToken { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_function() {
        match parse_expression("1 + foo(x)") {
            Err(DslError::UnknownFunction { offset, name }) => {
                assert_eq!(offset, 4);
                assert_eq!(name, "foo");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trailing_and_missing_tokens() {
        assert!(matches!(parse_expression("x y"), Err(DslError::UnexpectedToken { offset: 2, .. })));
        assert!(matches!(parse_expression("(x"), Err(DslError::UnexpectedEnd { offset: 2 })));
        assert!(matches!(parse_expression("x +"), Err(DslError::UnexpectedEnd { .. })));
        assert!(matches!(parse_expression(")"), Err(DslError::UnexpectedToken { offset: 0, .. })));
        assert!(matches!(parse_expression(""), Err(DslError::UnexpectedEnd { offset: 0 })));
    }

    #[test]
    fn print_round_trips_golden() {
        for src in [
            "1/((1+exp(-xi))*(1+exp(-zeta)))",
            "a - (b - c)",
            "(a - b) - c",
            "a / (b * c)",
            "(a^b)^c",
            "a^b^c",
            "(-a)^2",
            "-a^2",
            "-(a + b)",
            "-(a * b)",
            "2^-x",
            "--x",
            "sin(theta)^2 * r^2",
            "1e-7 * x + 0.1",
        ] {
            let e = p(src);
            let printed = print(&e);
            assert_eq!(p(&printed), e, "{src} -> {printed}");
        }
    }

    #[test]
    fn substitute_negative_keeps_shape() {
        let e = p("a * x").substitute("a", -2.5);
        assert_eq!(print(&e), "-2.5 * x");
        assert_eq!(p(&print(&e)), e);
    }

    #[test]
    fn variables_listed_once() {
        let mut vs = Vec::new();
        p("x*y + sin(x)").variables(&mut vs);
        assert_eq!(vs, vec!["x".to_string(), "y".to_string()]);
    }
}
