//! Run configuration: a JSON file, overridden by command-line flags. The
//! merged result is written back out as `effective-config.json` and
//! re-ingests to the same run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use psc_core::dsl::{MetricConfig, MetricSpec};
use psc_core::geometry::StencilOrder;
use psc_core::pipeline::PipelineConfig;
use psc_core::registry;

use crate::{Common, Failure};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Registry family name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    /// Inline metric description.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricConfig>,
    /// Family parameters (inline metrics carry theirs in `metric.params`).
    pub params: BTreeMap<String, f64>,
    /// X block of the product families.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    /// Node counts for curvature, slice-geometry, angle-check, yamabe and the
    /// example plane.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    /// Length of an extra circle factor appended by `yamabe`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circle: Option<f64>,
    pub pipeline: PipelineConfig,
}

pub fn read(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn looks_like_path(s: &str) -> bool {
    s.ends_with(".json") || s.contains('/') || Path::new(s).is_file()
}

impl RunConfig {
    /// Applies the flags on top of `self`.
    pub fn merge(&mut self, args: &Common) -> Result<(), Failure> {
        if let Some(spec) = &args.spec {
            if registry::defaults(spec).is_some() {
                self.family = Some(spec.clone());
                self.metric = None;
            } else if looks_like_path(spec) {
                let text = std::fs::read_to_string(spec).map_err(|e| Failure::input(format!("{spec}: {e}")))?;
                let cfg: MetricConfig = serde_json::from_str(&text).map_err(|e| Failure::input(format!("{spec}: {e}")))?;
                self.metric = Some(cfg);
                self.family = None;
            } else {
                return Err(Failure::input(format!(
                    "--spec: '{spec}' is neither a metric family ({}) nor a JSON file",
                    registry::FAMILIES.join(", ")
                )));
            }
        }
        let mut params: Vec<(String, f64)> = args.params.clone();
        if let Some(n) = args.n {
            params.push(("n".into(), n as f64));
        }
        if let Some(k) = args.k {
            params.push(("k".into(), k as f64));
        }
        for (k, v) in params {
            match &mut self.metric {
                Some(m) => m.params.insert(k, v),
                None => self.params.insert(k, v),
            };
        }
        if args.x.is_some() {
            self.x = args.x.clone();
        }
        if args.circle.is_some() {
            self.circle = args.circle;
        }
        let p = &mut self.pipeline;
        macro_rules! set {
            ($flag:expr, $slot:expr) => {
                if let Some(v) = $flag {
                    $slot = v;
                }
            };
        }
        set!(args.kappa0, p.kappa0);
        set!(args.eta, p.eta);
        set!(args.eta_prime, p.eta_prime);
        set!(args.alpha, p.solver.alpha);
        set!(args.tol, p.solver.krylov.tol);
        set!(args.retries, p.retries);
        set!(args.seed, p.solver.seed);
        set!(args.t_nodes, p.t_nodes);
        set!(args.circle_length, p.circle_length);
        if args.p.is_some() {
            p.p = args.p;
        }
        if args.eps.is_some() {
            p.eps_max = args.eps;
        }
        if let Some(order) = args.stencil_order {
            p.stencil_order = StencilOrder::from_int(order).ok_or_else(|| Failure::usage("--stencil-order must be 2 or 4"))?;
        }
        if args.force {
            p.force = true;
        }
        if let Some(g) = &args.grid {
            self.grid = Some(g.0.clone());
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<MetricSpec, Failure> {
        match (&self.family, &self.metric) {
            (Some(f), None) => registry::build(f, &self.params, self.x.as_deref()).map_err(|e| Failure::input(e.to_string())),
            (None, Some(m)) => {
                if !self.params.is_empty() {
                    return Err(Failure::input("params: inline metrics take their parameters in metric.params"));
                }
                MetricSpec::from_config(m).map_err(|e| Failure::input(format!("metric: {e}")))
            }
            (None, None) => Err(Failure::usage("no metric given: pass --spec or a config with 'family' or 'metric'")),
            (Some(_), Some(_)) => Err(Failure::input("config gives both 'family' and 'metric'")),
        }
    }

    /// `grid`, or `default` nodes along each of `dim` axes. A single entry
    /// is broadcast.
    pub fn grid_or(&mut self, dim: usize, default: usize) -> Result<Vec<usize>, Failure> {
        let g = match self.grid.clone() {
            None => vec![default; dim],
            Some(g) if g.len() == 1 => vec![g[0]; dim],
            Some(g) if g.len() == dim => g,
            Some(g) => return Err(Failure::input(format!("grid: {} entries given, the chart has {dim} axes", g.len()))),
        };
        self.grid = Some(g.clone());
        Ok(g)
    }
}

/// Default node count per axis for a chart of dimension `d`.
pub fn default_resolution(d: usize) -> usize {
    match d {
        0..=2 => 64,
        3 => 16,
        _ => 8,
    }
}
