use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::eval::CompiledExpr;
use super::jet::Jet2;
use super::lexer::{tokenize, Spanned, Token};
use super::parser::{parse_tokens, BinOp, Expr, Func};
use super::DslError;

pub const DEFAULT_LINE_EXTENT: [f64; 2] = [-3.0, 3.0];

/// Chart topology of one coordinate as written in the JSON format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologyConfig {
    Periodic { period: f64 },
    Line {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        extent: Option<[f64; 2]>,
    },
    /// Colatitude of a sphere-polar pair; `partner` is the longitude coordinate.
    Polar { partner: String },
}

/// JSON metric description. Component keys are `"a,b"`; omitted off-diagonal
/// entries are zero. `flat` lists the flat factors R_1..R_k in slicing order
/// (R_k is sliced first); every other coordinate belongs to X.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub coords: Vec<String>,
    #[serde(default)]
    pub topology: BTreeMap<String, TopologyConfig>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub components: BTreeMap<String, String>,
    #[serde(default)]
    pub flat: Vec<String>,
    #[serde(default = "default_circle")]
    pub circle: bool,
}

fn default_circle() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    Periodic { period: f64 },
    Line { lo: f64, hi: f64 },
    /// Offset colatitude grid on (0, pi), paired with a 2pi-periodic longitude.
    Polar { partner: usize },
}

impl Topology {
    pub fn is_compact(&self) -> bool {
        !matches!(self, Topology::Line { .. })
    }
}

/// Validated metric: coordinates ordered as X first, then R_1..R_k.
#[derive(Debug, Clone)]
pub struct MetricSpec {
    coords: Vec<String>,
    topology: Vec<Topology>,
    exprs: Vec<Expr>,
    compiled: Vec<CompiledExpr>,
    x_dim: usize,
    circle: bool,
}

fn substitute_params(toks: Vec<Spanned>, params: &BTreeMap<String, f64>) -> Vec<Spanned> {
    let mut out = Vec::with_capacity(toks.len());
    for (i, t) in toks.iter().enumerate() {
        let followed_by_paren = matches!(toks.get(i + 1), Some(Spanned { token: Token::LParen, .. }));
        match &t.token {
            Token::Ident(name) if !followed_by_paren && params.contains_key(name) => {
                let v = params[name];
                let at = |token| Spanned { token, offset: t.offset };
                if v < 0.0 {
                    out.extend([at(Token::LParen), at(Token::Minus), at(Token::Num(-v)), at(Token::RParen)]);
                } else {
                    out.push(at(Token::Num(v)));
                }
            }
            _ => out.push(t.clone()),
        }
    }
    out
}

/// Parses `src` after inlining `params` at the token level.
pub fn parse_with_params(src: &str, params: &BTreeMap<String, f64>) -> Result<Expr, DslError> {
    let toks = substitute_params(tokenize(src)?, params);
    parse_tokens(&toks, src.len())
}

pub fn parse_metric_spec(json: &str) -> Result<MetricSpec, DslError> {
    let cfg: MetricConfig = serde_json::from_str(json).map_err(|e| DslError::Json(e.to_string()))?;
    MetricSpec::from_config(&cfg)
}

#[inline]
fn packed(n: usize, i: usize, j: usize) -> usize {
    super::jet::packed_index(n, i, j)
}

impl MetricSpec {
    pub fn from_config(cfg: &MetricConfig) -> Result<MetricSpec, DslError> {
        let n = cfg.coords.len();
        for (i, c) in cfg.coords.iter().enumerate() {
            if cfg.coords[..i].contains(c) {
                return Err(DslError::Invalid(format!("duplicate coordinate '{c}'")));
            }
            if cfg.params.contains_key(c) {
                return Err(DslError::Invalid(format!("parameter '{c}' shadows a coordinate")));
            }
        }
        for f in &cfg.flat {
            if !cfg.coords.contains(f) {
                return Err(DslError::Invalid(format!("flat factor '{f}' is not a coordinate")));
            }
        }
        // canonical order: X coordinates, then flat factors in the given order
        let mut order: Vec<usize> = (0..n).filter(|&i| !cfg.flat.contains(&cfg.coords[i])).collect();
        let x_dim = order.len();
        for f in &cfg.flat {
            order.push(cfg.coords.iter().position(|c| c == f).unwrap());
        }
        if x_dim < 2 {
            return Err(DslError::DimensionTooSmall { x_dim });
        }
        let coords: Vec<String> = order.iter().map(|&i| cfg.coords[i].clone()).collect();
        let index = |name: &str| coords.iter().position(|c| c == name);

        for key in cfg.topology.keys() {
            if index(key).is_none() {
                return Err(DslError::Invalid(format!("topology given for undeclared coordinate '{key}'")));
            }
        }
        let mut topology = Vec::with_capacity(n);
        for c in &coords {
            topology.push(match cfg.topology.get(c) {
                None => Topology::Line { lo: DEFAULT_LINE_EXTENT[0], hi: DEFAULT_LINE_EXTENT[1] },
                Some(TopologyConfig::Line { extent }) => {
                    let [lo, hi] = extent.unwrap_or(DEFAULT_LINE_EXTENT);
                    if !(lo < hi) {
                        return Err(DslError::Invalid(format!("empty extent for '{c}'")));
                    }
                    Topology::Line { lo, hi }
                }
                Some(TopologyConfig::Periodic { period }) => {
                    if !(*period > 0.0) {
                        return Err(DslError::Invalid(format!("non-positive period for '{c}'")));
                    }
                    Topology::Periodic { period: *period }
                }
                Some(TopologyConfig::Polar { partner }) => {
                    let p = index(partner).ok_or_else(|| {
                        DslError::Invalid(format!("polar partner '{partner}' is not a coordinate"))
                    })?;
                    Topology::Polar { partner: p }
                }
            });
        }

        let mut entries: Vec<Option<(String, Expr)>> = vec![None; n * (n + 1) / 2];
        for (key, src) in &cfg.components {
            let parts: Vec<&str> = key.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(DslError::BadKey { key: key.clone() });
            }
            let (a, b) = match (index(parts[0]), index(parts[1])) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(DslError::UndeclaredCoordinate { key: key.clone() }),
            };
            let expr = parse_with_params(src, &cfg.params)
                .map_err(|e| DslError::Component { key: key.clone(), source: Box::new(e) })?;
            let slot = &mut entries[packed(n, a, b)];
            match slot {
                Some((prev_key, prev)) if *prev != expr => {
                    return Err(DslError::NonSymmetric { a: prev_key.clone(), b: key.clone() })
                }
                Some(_) => {}
                None => *slot = Some((key.clone(), expr)),
            }
        }
        for (i, c) in coords.iter().enumerate() {
            if entries[packed(n, i, i)].is_none() {
                return Err(DslError::MissingDiagonal { coord: c.clone() });
            }
        }
        let exprs = entries.into_iter().map(|e| e.map(|(_, x)| x).unwrap_or(Expr::Num(0.0))).collect();
        MetricSpec::from_parts(coords, topology, exprs, x_dim, cfg.circle)
    }

    /// Builds from already-ordered pieces; `exprs` is the packed upper triangle.
    pub fn from_parts(
        coords: Vec<String>,
        topology: Vec<Topology>,
        exprs: Vec<Expr>,
        x_dim: usize,
        circle: bool,
    ) -> Result<MetricSpec, DslError> {
        let n = coords.len();
        if n == 0 || topology.len() != n || exprs.len() != n * (n + 1) / 2 || x_dim > n {
            return Err(DslError::Invalid("inconsistent metric parts".into()));
        }
        for (i, t) in topology.iter().enumerate() {
            if let Topology::Polar { partner } = t {
                match topology.get(*partner) {
                    Some(Topology::Periodic { period }) if (period - 2.0 * PI).abs() < 1e-9 && *partner != i => {}
                    _ => {
                        return Err(DslError::Invalid(format!(
                            "polar coordinate '{}' needs a 2pi-periodic partner",
                            coords[i]
                        )))
                    }
                }
            }
        }
        let compiled = exprs
            .iter()
            .enumerate()
            .map(|(k, e)| {
                CompiledExpr::new(e, &coords)
                    .map_err(|err| DslError::Component { key: format!("#{k}"), source: Box::new(err) })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MetricSpec { coords, topology, exprs, compiled, x_dim, circle })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// dim X, one less than the n used by the curvature formulas.
    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    /// Number of flat factors.
    pub fn k(&self) -> usize {
        self.dim() - self.x_dim
    }

    pub fn circle(&self) -> bool {
        self.circle
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn coord_index(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == name)
    }

    pub fn topology(&self) -> &[Topology] {
        &self.topology
    }

    pub fn component(&self, i: usize, j: usize) -> &Expr {
        &self.exprs[packed(self.dim(), i, j)]
    }

    /// Packed jets of all components at `point`.
    pub fn eval_jets(&self, point: &[f64]) -> Result<Vec<Jet2>, DslError> {
        self.compiled.iter().map(|c| c.eval_jet2(point)).collect()
    }

    /// Plain values g_ij at `point`, row-major `n*n`.
    pub fn eval_matrix(&self, point: &[f64]) -> Result<Vec<f64>, DslError> {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.compiled[packed(n, i, j)].eval(point)?;
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        Ok(out)
    }

    /// Metric induced on the coordinate hypersurface `coords[index] = value`.
    pub fn restrict(&self, index: usize, value: f64) -> Result<MetricSpec, DslError> {
        let n = self.dim();
        if index >= n || n < 2 {
            return Err(DslError::Invalid("cannot restrict this coordinate".into()));
        }
        let name = &self.coords[index];
        let keep: Vec<usize> = (0..n).filter(|&i| i != index).collect();
        let remap = |i: usize| keep.iter().position(|&k| k == i);
        let coords: Vec<String> = keep.iter().map(|&i| self.coords[i].clone()).collect();
        let topology = keep
            .iter()
            .map(|&i| match self.topology[i] {
                Topology::Polar { partner } => match remap(partner) {
                    Some(p) => Topology::Polar { partner: p },
                    None => Topology::Line { lo: 0.0, hi: PI },
                },
                t => t,
            })
            .collect();
        let m = keep.len();
        let mut exprs = vec![Expr::Num(0.0); m * (m + 1) / 2];
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate().skip(a) {
                exprs[packed(m, a, b)] = self.component(i, j).substitute(name, value);
            }
        }
        let x_dim = if index < self.x_dim { self.x_dim - 1 } else { self.x_dim };
        MetricSpec::from_parts(coords, topology, exprs, x_dim, self.circle)
    }

    /// Appends a periodic coordinate with unit length element, orthogonal to the rest.
    pub fn with_circle(&self, name: &str, period: f64) -> Result<MetricSpec, DslError> {
        if self.coord_index(name).is_some() {
            return Err(DslError::Invalid(format!("coordinate '{name}' already exists")));
        }
        let n = self.dim();
        let m = n + 1;
        let mut coords = self.coords.clone();
        coords.push(name.to_string());
        let mut topology = self.topology.clone();
        topology.push(Topology::Periodic { period });
        let mut exprs = vec![Expr::Num(0.0); m * (m + 1) / 2];
        for i in 0..n {
            for j in i..n {
                exprs[packed(m, i, j)] = self.component(i, j).clone();
            }
        }
        exprs[packed(m, n, n)] = Expr::Num(1.0);
        MetricSpec::from_parts(coords, topology, exprs, m, self.circle)
    }

    /// The metric e^{2 phi} g, built at the expression level.
    pub fn conformal(&self, phi: &Expr) -> Result<MetricSpec, DslError> {
        let factor = Expr::call(Func::Exp, Expr::bin(BinOp::Mul, Expr::Num(2.0), phi.clone()));
        let exprs = self
            .exprs
            .iter()
            .map(|e| if e.is_zero_literal() { e.clone() } else { Expr::bin(BinOp::Mul, factor.clone(), e.clone()) })
            .collect();
        MetricSpec::from_parts(self.coords.clone(), self.topology.clone(), exprs, self.x_dim, self.circle)
    }

    /// JSON-format view (parameters already inlined).
    pub fn to_config(&self) -> MetricConfig {
        let n = self.dim();
        let mut components = BTreeMap::new();
        for i in 0..n {
            for j in i..n {
                let e = self.component(i, j);
                if i == j || !e.is_zero_literal() {
                    components.insert(format!("{},{}", self.coords[i], self.coords[j]), e.to_string());
                }
            }
        }
        let topology = self
            .coords
            .iter()
            .zip(&self.topology)
            .map(|(c, t)| {
                let tc = match *t {
                    Topology::Periodic { period } => TopologyConfig::Periodic { period },
                    Topology::Line { lo, hi } => TopologyConfig::Line { extent: Some([lo, hi]) },
                    Topology::Polar { partner } => TopologyConfig::Polar { partner: self.coords[partner].clone() },
                };
                (c.clone(), tc)
            })
            .collect();
        MetricConfig {
            coords: self.coords.clone(),
            topology,
            params: BTreeMap::new(),
            components,
            flat: self.coords[self.x_dim..].to_vec(),
            circle: self.circle,
        }
    }
}
