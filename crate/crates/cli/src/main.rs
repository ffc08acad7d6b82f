//! `qcmod`: command-line front end for the condenser, graph-capacity,
//! p-Laplace and experiment pipelines.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use config::{Command, Overrides};

#[derive(Parser, Debug)]
#[command(name = "qcmod", version, about = "Quasicentral moduli, condenser capacities and related experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Evaluate a rearrangement-invariant norm of a sequence or matrix.
    Norm(Common),
    /// Solve a condenser quasicentral modulus problem.
    Condenser(Common),
    /// Graph capacity on a Cayley ball, or a radius scan.
    Graphcap(GraphArgs),
    /// Compare a graph capacity with the condenser modulus of the truncated
    /// regular representation.
    Transfer(GraphArgs),
    /// Minimize the smooth p-Laplace functional and certify the minimizer.
    Plaplace(Common),
    /// Run an exploratory experiment pipeline.
    Experiment(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Config file (JSON).
    #[arg(long, conflicts_with = "inline")]
    config: Option<PathBuf>,
    /// Config given inline as JSON.
    #[arg(long)]
    inline: Option<String>,
    /// Output directory (a path ending in `.json` names the report file).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Exit with code 3 when any solve did not converge.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct GraphArgs {
    #[command(flatten)]
    common: Common,
    /// Group descriptor (JSON).
    #[arg(long)]
    group: Option<String>,
    /// Ball radius.
    #[arg(long = "R")]
    radius: Option<usize>,
    /// Inner plate: `origin`, `sphere`, `empty` or a JSON vertex set.
    #[arg(long)]
    x1: Option<String>,
    /// Outer plate.
    #[arg(long)]
    x2: Option<String>,
    /// Norm spec (JSON).
    #[arg(long)]
    norm: Option<String>,
}

fn json_or_string(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string()))
}

fn graph_overrides(g: &GraphArgs) -> Map<String, Value> {
    let mut m = Map::new();
    if let Some(s) = &g.group {
        m.insert("group".into(), json_or_string(s));
    }
    if let Some(r) = g.radius {
        m.insert("R".into(), Value::from(r));
    }
    if let Some(s) = &g.x1 {
        m.insert("x1".into(), json_or_string(s));
    }
    if let Some(s) = &g.x2 {
        m.insert("x2".into(), json_or_string(s));
    }
    if let Some(s) = &g.norm {
        m.insert("norm".into(), json_or_string(s));
    }
    m
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common, payload) = match &cli.command {
        Sub::Norm(c) => (Command::Norm, c.clone(), Map::new()),
        Sub::Condenser(c) => (Command::Condenser, c.clone(), Map::new()),
        Sub::Graphcap(g) => (Command::Graphcap, g.common.clone(), graph_overrides(g)),
        Sub::Transfer(g) => (Command::Transfer, g.common.clone(), graph_overrides(g)),
        Sub::Plaplace(c) => (Command::Plaplace, c.clone(), Map::new()),
        Sub::Experiment(c) => (Command::Experiment, c.clone(), Map::new()),
    };
    if let Err(msg) = run::configure_threads() {
        eprintln!("{msg}");
        return ExitCode::from(run::EXIT_CONFIG);
    }
    let text = match (&common.config, &common.inline) {
        (Some(p), _) => match std::fs::read_to_string(p) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("cannot read config {}: {e}", p.display());
                return ExitCode::from(run::EXIT_CONFIG);
            }
        },
        (None, Some(s)) => Some(s.clone()),
        (None, None) if payload.is_empty() => {
            eprintln!("one of --config or --inline is required");
            return ExitCode::from(run::EXIT_CONFIG);
        }
        (None, None) => None,
    };
    let ov = Overrides {
        command: Some(command),
        seed: common.seed,
        tol: common.tol,
        max_iters: common.max_iters,
        strict: common.strict,
        payload,
    };
    let cfg = match config::parse_config(text.as_deref(), &ov) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(run::EXIT_CONFIG);
        }
    };
    ExitCode::from(run::dispatch(&cfg, &common.out))
}
