//! `psc`: curvature, slice geometry, angle checks and the conformal
//! pipeline from the command line.
//!
//! Exit codes: 0 success, 1 usage, 2 solver failure, 3 gate or angle
//! failure, 4 input error.

mod commands;
mod config;
mod emit;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use commands::Status;
use config::RunConfig;
use emit::Out;

#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(m: impl Into<String>) -> Failure {
        Failure { code: 1, message: m.into() }
    }

    pub fn solver(m: impl Into<String>) -> Failure {
        Failure { code: 2, message: m.into() }
    }

    pub fn input(m: impl Into<String>) -> Failure {
        Failure { code: 4, message: m.into() }
    }
}

/// `NxMx..` node counts; a single number is used for every axis.
#[derive(Debug, Clone)]
pub struct GridArg(Vec<usize>);

impl FromStr for GridArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(['x', 'X'])
            .map(|p| p.trim().parse::<usize>().map_err(|_| format!("'{p}' is not a node count")))
            .collect::<Result<Vec<_>, _>>()
            .map(GridArg)
    }
}

fn parse_kv(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v = v.trim().parse::<f64>().map_err(|_| format!("'{v}' is not a number"))?;
    Ok((k.trim().to_string(), v))
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Registry family (round-sphere, flat-torus, stereographic-sphere,
    /// product, example-2-1, perturbed-product) or a metric JSON file.
    #[arg(long)]
    spec: Option<String>,
    /// Family or metric parameter, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_kv)]
    params: Vec<(String, f64)>,
    /// X block of the product families: round-sphere or flat-torus.
    #[arg(long)]
    x: Option<String>,
    /// Node counts, e.g. 64x64.
    #[arg(long)]
    grid: Option<GridArg>,
    /// Shorthand for --param n=N.
    #[arg(long)]
    n: Option<usize>,
    /// Shorthand for --param k=K.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    kappa0: Option<f64>,
    /// Bound on the C^{1,alpha} norm of u.
    #[arg(long)]
    eta: Option<f64>,
    /// Bound on |d_t^2 u| near t = 0.
    #[arg(long)]
    eta_prime: Option<f64>,
    /// Hölder exponent.
    #[arg(long)]
    alpha: Option<f64>,
    /// Exponent of the bump norm.
    #[arg(long)]
    p: Option<f64>,
    /// Relative residual tolerance of the linear solve.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    retries: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Nodes on the auxiliary circle.
    #[arg(long)]
    t_nodes: Option<usize>,
    /// Length of the auxiliary circle.
    #[arg(long)]
    circle_length: Option<f64>,
    /// Bump support half-width (the starting width for the pipeline).
    #[arg(long)]
    eps: Option<f64>,
    /// yamabe: append a circle factor of this length.
    #[arg(long)]
    circle: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..=4))]
    stencil_order: Option<u32>,
    /// Solve even when the ellipticity certificate fails.
    #[arg(long)]
    force: bool,
    /// Run configuration JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "psc-out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scalar curvature on a chart grid.
    Curvature(Common),
    /// Normals, second fundamental forms and the Gauss-Codazzi residual on X.
    SliceGeometry(Common),
    /// The angle condition at every node of X.
    AngleCheck(Common),
    /// One solve of the bump-driven PDE on X x S^1.
    SolvePde(Common),
    /// The full construction with gates and the new scalar curvature on X.
    Pipeline(Common),
    /// Yamabe quotient of the constant function and the conformal Laplacian spectrum bound.
    Yamabe(Common),
    /// Gauss curvature and angle audit of the example-2-1 family.
    #[command(name = "reproduce-example-2-1")]
    ReproduceExample(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Curvature(c)
            | Command::SliceGeometry(c)
            | Command::AngleCheck(c)
            | Command::SolvePde(c)
            | Command::Pipeline(c)
            | Command::Yamabe(c)
            | Command::ReproduceExample(c) => c,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "psc", version, about = "Positive scalar curvature by conformal change on slices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn threads() -> Result<Option<usize>, Failure> {
    match std::env::var("PSC_PIPELINE_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(Failure::input(format!("PSC_PIPELINE_THREADS: expected a positive integer, got '{s}'"))),
        },
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<Status, Failure> {
    psc_core::par::init_threads(threads()?);
    let args = cli.command.common();
    let mut cfg = match &args.config {
        Some(path) => config::read(path)?,
        None => RunConfig::default(),
    };
    cfg.merge(args)?;
    let out = Out::new(&args.out)?;
    match cli.command {
        Command::Curvature(_) => commands::curvature(&mut cfg, &out),
        Command::SliceGeometry(_) => commands::slice_geometry(&mut cfg, &out),
        Command::AngleCheck(_) => commands::angle_check(&mut cfg, &out),
        Command::SolvePde(_) => commands::solve_pde(&mut cfg, &out),
        Command::Pipeline(_) => commands::pipeline_cmd(&mut cfg, &out),
        Command::Yamabe(_) => commands::yamabe(&mut cfg, &out),
        Command::ReproduceExample(_) => commands::reproduce_example(&mut cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Fail) => ExitCode::from(3),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_param_parsing() {
        assert_eq!(GridArg::from_str("64x32").unwrap().0, vec![64, 32]);
        assert_eq!(GridArg::from_str("16").unwrap().0, vec![16]);
        assert!(GridArg::from_str("8x").is_err());
        assert_eq!(parse_kv("a=3").unwrap(), ("a".to_string(), 3.0));
        assert!(parse_kv("a").is_err());
    }

    #[test]
    fn flags_override_the_config() {
        let cli = Cli::try_parse_from(["psc", "pipeline", "--spec", "product", "--kappa0", "1.5", "--param", "r=2", "--grid", "16"]).unwrap();
        let mut cfg = RunConfig::default();
        cfg.pipeline.kappa0 = 3.0;
        cfg.merge(cli.command.common()).unwrap();
        assert_eq!(cfg.pipeline.kappa0, 1.5);
        assert_eq!(cfg.params["r"], 2.0);
        assert_eq!(cfg.grid, Some(vec![16]));
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
