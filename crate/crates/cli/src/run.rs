//! Dispatch of a validated configuration and deterministic artifact writing.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use qcmod::cayley::{self, build_ball};
use qcmod::experiments::{gamma1_experiment, hybrid_exponent_scan, ratio_experiment};
use qcmod::io;
use qcmod::linalg::CMat;
use qcmod::norms;
use qcmod::operator::{make_condenser, MatrixJson};
use qcmod::plaplace::{self, SmoothProblem, ThetaReport};
use qcmod::solver::{solve_condenser, SolveOptions};
use qcmod::Error;

use crate::config::{Experiment, NormInput, Payload, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

/// Applies `QCMOD_THREADS` to the global pool.
pub fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("QCMOD_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("QCMOD_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

struct Outcome {
    report: Value,
    files: Vec<(String, String)>,
    converged: bool,
    stdout: Option<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) | Error::Io(_) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

fn manifest(cfg: &RunConfig) -> Value {
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command.name(),
        "seed": cfg.options.seed,
        "tol": cfg.options.tol,
        "max_iters": cfg.options.max_iters,
        "options": cfg.options,
    })
}

/// `(directory, report path)` for an `--out` argument.
fn out_paths(out: &Path) -> (PathBuf, PathBuf) {
    if out.extension().is_some_and(|e| e == "json") {
        let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, out.to_path_buf())
    } else {
        (out.to_path_buf(), out.join("report.json"))
    }
}

pub fn dispatch(cfg: &RunConfig, out: &Path) -> u8 {
    let start = Instant::now();
    let outcome = match execute(cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let (dir, report_path) = out_paths(out);
    let mut report = outcome.report;
    report["manifest"] = manifest(cfg);
    let mut man = manifest(cfg);
    man["wall_time_s"] = json!(start.elapsed().as_secs_f64());
    man["threads"] = json!(rayon::current_num_threads());
    let written = (|| -> qcmod::Result<()> {
        for (name, contents) in &outcome.files {
            io::write_file(&dir.join(name), contents)?;
        }
        io::write_file(&report_path, &io::to_json(&report)?)?;
        io::write_file(&dir.join("manifest.json"), &io::to_json(&man)?)
    })();
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_NUMERIC;
    }
    if let Some(s) = outcome.stdout {
        println!("{s}");
    }
    if cfg.strict && !outcome.converged {
        eprintln!("not converged (strict mode)");
        return EXIT_NOT_CONVERGED;
    }
    EXIT_OK
}

fn matrix(m: &CMat) -> Value {
    serde_json::to_value(MatrixJson::from_matrix(m)).expect("matrix serializes")
}

fn theta_json(t: &ThetaReport) -> Value {
    json!({
        "theta": matrix(&t.theta),
        "P1": matrix(&t.p1),
        "Q1": matrix(&t.q1),
        "P1_rank": t.p1_rank,
        "Q1_rank": t.q1_rank,
        "compression_eigs": {
            "upper": t.compression_eigs[0],
            "lower": t.compression_eigs[1],
            "null": t.compression_eigs[2],
        },
        "theta_opnorm": t.theta_opnorm,
        "delta": t.delta,
        "eps1": t.eps1,
        "upper_condition": t.upper_condition,
        "lower_condition": t.lower_condition,
        "null_condition": t.null_condition,
        "passes": t.passes(),
        "kkt_condition": t.kkt_condition,
        "relation_residuals": t.relation_residuals,
        "flags": t.flags,
    })
}

fn execute(cfg: &RunConfig) -> qcmod::Result<Outcome> {
    let opts: &SolveOptions = &cfg.options;
    match &cfg.payload {
        Payload::Norm { input, spec } => {
            let value = match input {
                NormInput::Sequence(s) => norms::vector_norm(s, spec)?,
                NormInput::Matrix(m) => norms::matrix_norm(m, spec)?,
            };
            Ok(Outcome {
                report: json!({ "command": "norm", "value": value, "norm": spec }),
                files: Vec::new(),
                converged: true,
                stdout: Some(value.to_string()),
            })
        }
        Payload::Condenser { problem, specs } => {
            let cond = make_condenser(problem.tuple.dim(), &problem.p, &problem.q)?;
            let r = solve_condenser(&problem.tuple, &cond, specs, opts)?;
            let a = cond.embed(&r.minimizer);
            Ok(Outcome {
                report: json!({
                    "command": "condenser",
                    "value_upper": r.value,
                    "converged": r.converged,
                    "iters": r.iters,
                    "history_csv": "history.csv",
                    "minimizer": matrix(&a),
                    "restart_values": r.restart_values,
                    "restart_spread": r.restart_spread(),
                    "feasibility_residuals": r.feasibility_residuals,
                    "method": r.method,
                    "flags": r.flags,
                }),
                files: vec![("history.csv".into(), io::history_csv(&r.history))],
                converged: r.converged,
                stdout: Some(r.value.to_string()),
            })
        }
        Payload::Graphcap(b) => {
            if let Some(radii) = &b.radii {
                let p = b.spec.schatten_p().expect("validated");
                let r = cayley::parabolicity_scan(&b.group, p, &b.x1, radii, opts)?;
                let converged = r.rows.iter().all(|row| row.converged);
                let mut report = serde_json::to_value(&r)?;
                report["command"] = json!("graphcap");
                report["group"] = serde_json::to_value(&b.group)?;
                report["scan_csv"] = json!("scan.csv");
                return Ok(Outcome {
                    report,
                    files: vec![("scan.csv".into(), io::scan_csv(&r.rows))],
                    converged,
                    stdout: None,
                });
            }
            let radius = b.radius.expect("validated");
            let ball = build_ball(&b.group, radius, &b.x1, &b.x2)?;
            let r = cayley::graph_capacity(&ball, &b.spec, opts)?;
            Ok(Outcome {
                report: json!({
                    "command": "graphcap",
                    "group": b.group,
                    "R": radius,
                    "n_vertices": ball.n_vertices(),
                    "norm": b.spec,
                    "value": r.value,
                    "converged": r.converged,
                    "iters": r.iters,
                    "history_csv": "history.csv",
                    "potential": r.minimizer,
                    "restart_values": r.restart_values,
                    "method": r.method,
                    "flags": r.flags,
                }),
                files: vec![("history.csv".into(), io::history_csv(&r.history))],
                converged: r.converged,
                stdout: Some(r.value.to_string()),
            })
        }
        Payload::Transfer(b) => {
            let radius = b.radius.expect("validated");
            let ball = build_ball(&b.group, radius, &b.x1, &b.x2)?;
            let r = cayley::verify_transfer(&ball, &b.spec, opts)?;
            Ok(Outcome {
                report: json!({
                    "command": "transfer",
                    "group": b.group,
                    "R": radius,
                    "n_vertices": ball.n_vertices(),
                    "norm": b.spec,
                    "cap_value": r.cap_value,
                    "k_value": r.k_value,
                    "gap": r.gap,
                    "relative_gap": r.relative_gap,
                    "inequality_holds": r.inequality_holds,
                    "cap_converged": r.cap_converged,
                    "k_converged": r.k_converged,
                    "history_csv": "history.csv",
                }),
                files: vec![("history.csv".into(), io::history_csv(&r.k_report.history))],
                converged: r.cap_converged && r.k_converged,
                stdout: None,
            })
        }
        Payload::Plaplace { problem, p, trials, el_tol } => {
            let cond = make_condenser(problem.tuple.dim(), &problem.p, &problem.q)?;
            let prob = SmoothProblem::new(problem.tuple.clone(), cond.clone(), *p)?;
            let r = plaplace::minimize_smooth(&prob, opts)?;
            let el = plaplace::euler_lagrange_report(&prob, &r.minimizer, el_tol)?;
            let mut report = json!({
                "command": "plaplace",
                "p": p,
                "value": r.value,
                "converged": r.converged,
                "iters": r.iters,
                "history_csv": "history.csv",
                "minimizer": matrix(&cond.embed(&r.minimizer)),
                "restart_values": r.restart_values,
                "flags": r.flags,
                "euler_lagrange": theta_json(&el),
            });
            let mut converged = r.converged;
            if let Some(t) = trials {
                let u = plaplace::uniqueness_probe(&prob, opts, *t)?;
                converged &= u.excluded.is_empty();
                report["uniqueness"] = json!({
                    "values": u.values,
                    "converged": u.converged,
                    "max_commutator_distance": u.max_commutator_distance,
                    "max_minimizer_distance": u.max_minimizer_distance,
                    "excluded": u.excluded,
                    "pairs": u.commutator_distances.iter()
                        .map(|&(a, b, j, d)| json!({"a": a, "b": b, "j": j, "distance": d}))
                        .collect::<Vec<_>>(),
                });
            }
            Ok(Outcome {
                report,
                files: vec![("history.csv".into(), io::history_csv(&r.history))],
                converged,
                stdout: None,
            })
        }
        Payload::Experiment(e) => match e {
            Experiment::Gamma1(c) => {
                let r = gamma1_experiment(c, opts)?;
                let mut report = serde_json::to_value(&r)?;
                report["command"] = json!("experiment");
                report["experiment"] = json!("gamma1");
                report["series_csv"] = json!("series.csv");
                Ok(Outcome {
                    files: vec![("series.csv".into(), io::series_csv(&r.sweep.points, r.estimate))],
                    converged: r.all_converged,
                    report,
                    stdout: None,
                })
            }
            Experiment::Ratio(c) => {
                let r = ratio_experiment(c, opts)?;
                let files: Vec<(String, String)> = r
                    .rows
                    .iter()
                    .enumerate()
                    .map(|(i, row)| (format!("series_{i}.csv"), io::series_csv(&row.sweep.points, row.estimate)))
                    .collect();
                let converged = r.rows.iter().all(|row| row.converged);
                let mut report = serde_json::to_value(&r)?;
                report["command"] = json!("experiment");
                report["experiment"] = json!("ratio");
                report["series_csv"] = json!(files.iter().map(|f| f.0.clone()).collect::<Vec<_>>());
                Ok(Outcome { report, files, converged, stdout: None })
            }
            Experiment::Hybrid(c) => {
                let r = hybrid_exponent_scan(c, opts)?;
                let files: Vec<(String, String)> = r
                    .rows
                    .iter()
                    .enumerate()
                    .map(|(i, row)| (format!("series_{i}.csv"), io::series_csv(&row.sweep.points, row.estimate)))
                    .collect();
                let converged = r.rows.iter().all(|row| row.converged);
                let mut report = serde_json::to_value(&r)?;
                report["command"] = json!("experiment");
                report["experiment"] = json!("hybrid");
                report["series_csv"] = json!(files.iter().map(|f| f.0.clone()).collect::<Vec<_>>());
                Ok(Outcome { report, files, converged, stdout: None })
            }
        },
    }
}
