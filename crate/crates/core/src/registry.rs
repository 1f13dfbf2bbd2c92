//! Named metric families used by the CLI, the tests and the acceptance run.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::dsl::{DslError, MetricConfig, MetricSpec, TopologyConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown metric family '{0}'")]
    Unknown(String),
    #[error("family '{family}' does not take parameter '{param}'")]
    UnknownParam { family: String, param: String },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Dsl(#[from] DslError),
}

pub const FAMILIES: [&str; 6] =
    ["round-sphere", "flat-torus", "stereographic-sphere", "product", "example-2-1", "perturbed-product"];

/// Default parameters per family; anything else is rejected.
pub fn defaults(family: &str) -> Option<BTreeMap<&'static str, f64>> {
    let m: &[(&str, f64)] = match family {
        "round-sphere" => &[("r", 1.0)],
        "flat-torus" => &[("d", 2.0), ("period", 2.0 * PI)],
        "stereographic-sphere" => &[("extent", 3.0)],
        "product" => &[("k", 2.0), ("r", 1.0), ("d", 2.0), ("period", 2.0 * PI)],
        "example-2-1" => &[("a", 3.0), ("n", 3.0), ("period", 2.0 * PI)],
        "perturbed-product" => &[("k", 2.0), ("r", 1.0), ("d", 2.0), ("period", 2.0 * PI), ("amp", 0.1), ("mode", 1.0)],
        _ => return None,
    };
    Some(m.iter().copied().collect())
}

fn resolve(family: &str, given: &BTreeMap<String, f64>) -> Result<BTreeMap<&'static str, f64>, RegistryError> {
    let mut p = defaults(family).ok_or_else(|| RegistryError::Unknown(family.into()))?;
    for (k, v) in given {
        match p.get_mut(k.as_str()) {
            Some(slot) => *slot = *v,
            None => return Err(RegistryError::UnknownParam { family: family.into(), param: k.clone() }),
        }
    }
    Ok(p)
}

fn count(p: &BTreeMap<&str, f64>, key: &str, min: usize) -> Result<usize, RegistryError> {
    let v = p[key];
    if v.fract() != 0.0 || v < min as f64 {
        return Err(RegistryError::BadParam(format!("{key} must be an integer >= {min}, got {v}")));
    }
    Ok(v as usize)
}

fn positive(p: &BTreeMap<&str, f64>, key: &str) -> Result<f64, RegistryError> {
    let v = p[key];
    if !(v > 0.0) {
        return Err(RegistryError::BadParam(format!("{key} must be positive, got {v}")));
    }
    Ok(v)
}

fn empty() -> MetricConfig {
    MetricConfig {
        coords: Vec::new(),
        topology: BTreeMap::new(),
        params: BTreeMap::new(),
        components: BTreeMap::new(),
        flat: Vec::new(),
        circle: true,
    }
}

fn sphere(cfg: &mut MetricConfig, r: f64) {
    cfg.coords.extend(["theta".to_string(), "phi".to_string()]);
    cfg.topology.insert("theta".into(), TopologyConfig::Polar { partner: "phi".into() });
    cfg.topology.insert("phi".into(), TopologyConfig::Periodic { period: 2.0 * PI });
    cfg.components.insert("theta,theta".into(), format!("{}", r * r));
    cfg.components.insert("phi,phi".into(), format!("{}*sin(theta)^2", r * r));
}

fn torus(cfg: &mut MetricConfig, d: usize, period: f64) {
    for i in 1..=d {
        let c = format!("x{i}");
        cfg.topology.insert(c.clone(), TopologyConfig::Periodic { period });
        cfg.components.insert(format!("{c},{c}"), "1".into());
        cfg.coords.push(c);
    }
}

/// Names of the flat factors R_1..R_k.
pub fn flat_names(k: usize) -> Vec<String> {
    match k {
        1 => vec!["zeta".into()],
        2 => vec!["zeta".into(), "xi".into()],
        _ => (1..=k).map(|i| format!("r{i}")).collect(),
    }
}

fn add_flat(cfg: &mut MetricConfig, k: usize) {
    for c in flat_names(k) {
        cfg.components.insert(format!("{c},{c}"), "1".into());
        cfg.topology.insert(c.clone(), TopologyConfig::Line { extent: None });
        cfg.coords.push(c.clone());
        cfg.flat.push(c);
    }
}

fn x_block(cfg: &mut MetricConfig, x: &str, p: &BTreeMap<&str, f64>) -> Result<(), RegistryError> {
    match x {
        "round-sphere" => sphere(cfg, positive(p, "r")?),
        "flat-torus" => torus(cfg, count(p, "d", 2)?, positive(p, "period")?),
        other => return Err(RegistryError::BadParam(format!("X family must be round-sphere or flat-torus, got '{other}'"))),
    }
    Ok(())
}

/// Builds the named family. `x` selects the X block of the product families
/// (round-sphere by default).
pub fn build(family: &str, params: &BTreeMap<String, f64>, x: Option<&str>) -> Result<MetricSpec, RegistryError> {
    Ok(MetricSpec::from_config(&config(family, params, x)?)?)
}

pub fn config(family: &str, params: &BTreeMap<String, f64>, x: Option<&str>) -> Result<MetricConfig, RegistryError> {
    let p = resolve(family, params)?;
    let mut cfg = empty();
    match family {
        "round-sphere" => sphere(&mut cfg, positive(&p, "r")?),
        "flat-torus" => torus(&mut cfg, count(&p, "d", 2)?, positive(&p, "period")?),
        "stereographic-sphere" => {
            let e = positive(&p, "extent")?;
            for c in ["u", "v"] {
                cfg.coords.push(c.into());
                cfg.topology.insert(c.into(), TopologyConfig::Line { extent: Some([-e, e]) });
            }
            let w = "4/(1 + u^2 + v^2)^2".to_string();
            cfg.components.insert("u,u".into(), w.clone());
            cfg.components.insert("v,v".into(), w);
        }
        "product" => {
            x_block(&mut cfg, x.unwrap_or("round-sphere"), &p)?;
            add_flat(&mut cfg, count(&p, "k", 1)?);
        }
        "perturbed-product" => {
            x_block(&mut cfg, x.unwrap_or("round-sphere"), &p)?;
            add_flat(&mut cfg, count(&p, "k", 1)?);
            let x1 = cfg.coords[0].clone();
            cfg.components.insert(format!("{x1},zeta"), format!("{}*sin({}*{x1})", p["amp"], p["mode"]));
        }
        "example-2-1" => {
            let n = count(&p, "n", 3)?;
            torus(&mut cfg, n - 1, positive(&p, "period")?);
            add_flat(&mut cfg, 2);
            let a = positive(&p, "a")?;
            cfg.components.insert("zeta,zeta".into(), format!("{a}"));
            cfg.components.insert("xi,xi".into(), format!("{a}"));
            cfg.components.insert("zeta,xi".into(), "1/((1 + exp(-xi))*(1 + exp(-zeta)))".into());
        }
        other => return Err(RegistryError::Unknown(other.into())),
    }
    Ok(cfg)
}
