//! Closed-form metric expressions: lexer, Pratt parser, printer, jets, and the
//! JSON metric-spec format.

mod eval;
mod jet;
mod lexer;
mod parser;
mod sample;
mod spec;

pub use eval::{eval_jet2, CompiledExpr};
pub use jet::{packed_index, Jet2};
pub use lexer::{tokenize, Spanned, Token};
pub use parser::{parse_expression, parse_tokens, print, BinOp, Expr, Func};
pub use sample::{jet_fd_gap, random_expr};
pub use spec::{parse_metric_spec, MetricConfig, MetricSpec, Topology, TopologyConfig};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("unexpected character '{ch}' at byte {offset}")]
    UnexpectedChar { offset: usize, ch: char },
    #[error("malformed number '{text}' at byte {offset}")]
    MalformedNumber { offset: usize, text: String },
    #[error("unexpected {found} at byte {offset}")]
    UnexpectedToken { offset: usize, found: String },
    #[error("unexpected end of input at byte {offset}")]
    UnexpectedEnd { offset: usize },
    #[error("unknown function '{name}' at byte {offset}")]
    UnknownFunction { offset: usize, name: String },
    #[error("variable '{name}' is not a declared coordinate")]
    UndeclaredVariable { name: String },
    #[error("domain error: {what} in '{subexpr}'")]
    Domain { what: String, subexpr: String },
    #[error("component '{key}': {source}")]
    Component { key: String, source: Box<DslError> },
    #[error("component key '{key}' names an undeclared coordinate")]
    UndeclaredCoordinate { key: String },
    #[error("component key '{key}' is not of the form 'a,b'")]
    BadKey { key: String },
    #[error("missing diagonal component g[{coord},{coord}]")]
    MissingDiagonal { coord: String },
    #[error("entries '{a}' and '{b}' disagree")]
    NonSymmetric { a: String, b: String },
    #[error("dim X = {x_dim} but at least 2 is required")]
    DimensionTooSmall { x_dim: usize },
    #[error("invalid metric spec: {0}")]
    Invalid(String),
    #[error("json: {0}")]
    Json(String),
}
