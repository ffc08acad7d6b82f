//! Run configuration: JSON parsing and validation that reports every problem
//! found, each with its path.

use std::fmt;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use qcmod::cayley::{GroupSpec, VertexSet};
use qcmod::experiments::{Gamma1Config, HybridConfig, RatioConfig};
use qcmod::linalg::CMat;
use qcmod::norms::NormSpec;
use qcmod::operator::{MatrixJson, NormSpecs, OperatorTuple, ProjectionJson, ProjectionSource, TupleJson};
use qcmod::plaplace::ElTolerances;
use qcmod::solver::SolveOptions;

pub const COMMANDS: [&str; 6] = ["norm", "condenser", "graphcap", "transfer", "plaplace", "experiment"];
const TOP_KEYS: [&str; 6] = ["command", "payload", "seed", "tol", "max_iters", "strict"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Norm,
    Condenser,
    Graphcap,
    Transfer,
    Plaplace,
    Experiment,
}

impl Command {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "norm" => Command::Norm,
            "condenser" => Command::Condenser,
            "graphcap" => Command::Graphcap,
            "transfer" => Command::Transfer,
            "plaplace" => Command::Plaplace,
            "experiment" => Command::Experiment,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        COMMANDS[self as usize]
    }
}

#[derive(Clone, Debug)]
pub enum NormInput {
    Sequence(Vec<f64>),
    Matrix(CMat),
}

#[derive(Clone, Debug)]
pub struct CondenserInput {
    pub tuple: OperatorTuple,
    pub p: ProjectionSource,
    pub q: ProjectionSource,
}

#[derive(Clone, Debug)]
pub struct BallInput {
    pub group: GroupSpec,
    pub radius: Option<usize>,
    pub radii: Option<Vec<usize>>,
    pub x1: VertexSet,
    pub x2: VertexSet,
    pub spec: NormSpec,
}

#[derive(Clone, Debug)]
pub enum Experiment {
    Gamma1(Gamma1Config),
    Ratio(RatioConfig),
    Hybrid(HybridConfig),
}

#[derive(Clone, Debug)]
pub enum Payload {
    Norm { input: NormInput, spec: NormSpec },
    Condenser { problem: CondenserInput, specs: NormSpecs },
    Graphcap(BallInput),
    Transfer(BallInput),
    Plaplace { problem: CondenserInput, p: f64, trials: Option<usize>, el_tol: ElTolerances },
    Experiment(Experiment),
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub payload: Payload,
    pub options: SolveOptions,
    pub strict: bool,
}

/// Command-line values that take precedence over the config document.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub strict: bool,
    /// Extra payload entries (graphcap flags).
    pub payload: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} error(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

/// Typed access to the keys of one JSON object, recording errors instead of
/// stopping at the first.
struct Fields<'a> {
    obj: &'a Map<String, Value>,
    path: String,
    errors: &'a mut Vec<String>,
    known: Vec<&'static str>,
}

impl<'a> Fields<'a> {
    fn new(obj: &'a Map<String, Value>, path: &str, errors: &'a mut Vec<String>) -> Self {
        Self { obj, path: path.to_string(), errors, known: Vec::new() }
    }

    fn at(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn get<T: DeserializeOwned>(&mut self, key: &'static str, required: bool) -> Option<T> {
        self.known.push(key);
        match self.obj.get(key) {
            None | Some(Value::Null) => {
                if required {
                    self.errors.push(format!("{}: missing required field", self.at(key)));
                }
                None
            }
            Some(v) => match serde_json::from_value(v.clone()) {
                Ok(t) => Some(t),
                Err(e) => {
                    self.errors.push(format!("{}: {e}", self.at(key)));
                    None
                }
            },
        }
    }

    fn req<T: DeserializeOwned>(&mut self, key: &'static str) -> Option<T> {
        self.get(key, true)
    }

    fn opt<T: DeserializeOwned>(&mut self, key: &'static str) -> Option<T> {
        self.get(key, false)
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.known.push(key);
        self.obj.get(key)
    }

    fn error(&mut self, key: &str, msg: impl fmt::Display) {
        let at = self.at(key);
        self.errors.push(format!("{at}: {msg}"));
    }

    fn finish(self) {
        let mut unknown: Vec<&String> = self.obj.keys().filter(|k| !self.known.contains(&k.as_str())).collect();
        unknown.sort();
        for k in unknown {
            let at = if self.path.is_empty() { k.clone() } else { format!("{}.{k}", self.path) };
            self.errors.push(format!("{at}: unknown field"));
        }
    }
}

fn check<T>(errors: &mut Vec<String>, path: &str, r: qcmod::Result<T>) -> Option<T> {
    match r {
        Ok(t) => Some(t),
        Err(e) => {
            errors.push(format!("{path}: {e}"));
            None
        }
    }
}

/// Parses and validates a config document. `text` may be empty when the
/// overrides carry everything needed.
pub fn parse_config(text: Option<&str>, ov: &Overrides) -> Result<RunConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let doc: Map<String, Value> = match text {
        None => Map::new(),
        Some(t) => match serde_json::from_str::<Value>(t) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(ConfigErrors(vec!["config: expected a JSON object".into()])),
            Err(e) => return Err(ConfigErrors(vec![format!("config: malformed JSON: {e}")])),
        },
    };
    let mut top = Fields::new(&doc, "", &mut errors);
    let doc_command: Option<String> = top.opt("command");
    let seed: Option<u64> = top.opt("seed");
    let tol: Option<f64> = top.opt("tol");
    let max_iters: Option<usize> = top.opt("max_iters");
    let strict: Option<bool> = top.opt("strict");
    let payload_value = top.raw("payload").cloned();
    // without a "payload" key the document itself (minus the top-level keys)
    // is the payload
    let mut payload: Map<String, Value> = match payload_value {
        Some(Value::Object(m)) => {
            top.finish();
            m
        }
        Some(_) => {
            top.error("payload", "expected a JSON object");
            top.finish();
            Map::new()
        }
        None => doc.iter().filter(|(k, _)| !TOP_KEYS.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect(),
    };
    for (k, v) in &ov.payload {
        payload.insert(k.clone(), v.clone());
    }

    let command = match (&doc_command, ov.command) {
        (Some(s), cli) => match Command::parse(s) {
            Some(c) => {
                if let Some(cli) = cli.filter(|&x| x != c) {
                    errors.push(format!(
                        "command: config says \"{s}\" but the subcommand is \"{}\"",
                        cli.name()
                    ));
                }
                Some(c)
            }
            None => {
                errors.push(format!("command: unknown command \"{s}\"; allowed: {}", COMMANDS.join(", ")));
                None
            }
        },
        (None, Some(c)) => Some(c),
        (None, None) => {
            errors.push(format!("command: missing; allowed: {}", COMMANDS.join(", ")));
            None
        }
    };

    let mut options = SolveOptions::default();
    let parsed = command.and_then(|c| parse_payload(c, &payload, &mut errors, &mut options));

    if let Some(s) = ov.seed.or(seed) {
        options.seed = s;
    }
    if let Some(t) = ov.tol.or(tol) {
        options.tol = t;
    }
    if let Some(m) = ov.max_iters.or(max_iters) {
        options.max_iters = m;
    }
    check(&mut errors, "options", options.validate());

    match (command, parsed) {
        (Some(command), Some(payload)) if errors.is_empty() => Ok(RunConfig {
            command,
            payload,
            options,
            strict: ov.strict || strict.unwrap_or(false),
        }),
        _ => Err(ConfigErrors(errors)),
    }
}

fn parse_condenser_input(f: &mut Fields) -> (Option<TupleJson>, Option<ProjectionJson>, Option<ProjectionJson>) {
    (f.req("tuple"), f.req("P"), f.req("Q"))
}

fn build_condenser_input(
    errors: &mut Vec<String>,
    t: Option<TupleJson>,
    p: Option<ProjectionJson>,
    q: Option<ProjectionJson>,
) -> Option<CondenserInput> {
    let tuple = t.and_then(|t| check(errors, "payload.tuple", t.to_tuple()));
    let p = p.and_then(|p| check(errors, "payload.P", p.to_source()));
    let q = q.and_then(|q| check(errors, "payload.Q", q.to_source()));
    let (tuple, p, q) = (tuple?, p?, q?);
    check(errors, "payload", qcmod::operator::make_condenser(tuple.dim(), &p, &q))?;
    Some(CondenserInput { tuple, p, q })
}

fn parse_payload(
    command: Command,
    payload: &Map<String, Value>,
    errors: &mut Vec<String>,
    options: &mut SolveOptions,
) -> Option<Payload> {
    let mut local = Vec::new();
    let out = payload_fields(command, payload, &mut local, options);
    let failed = !local.is_empty();
    errors.extend(local);
    if failed {
        None
    } else {
        out
    }
}

fn payload_fields(
    command: Command,
    payload: &Map<String, Value>,
    local: &mut Vec<String>,
    options: &mut SolveOptions,
) -> Option<Payload> {
    let mut f = Fields::new(payload, "payload", local);
    if let Some(o) = f.opt::<SolveOptions>("options") {
        *options = o;
    }
    match command {
        Command::Norm => {
            let s: Option<Vec<f64>> = f.opt("s");
            let m: Option<MatrixJson> = f.opt("matrix");
            let spec: Option<NormSpec> = f.req("norm");
            let input = match (s, m) {
                (Some(s), None) => Some(NormInput::Sequence(s)),
                (None, Some(m)) => match m.to_matrix() {
                    Ok(m) => Some(NormInput::Matrix(m)),
                    Err(e) => {
                        f.error("matrix", e);
                        None
                    }
                },
                (Some(_), Some(_)) => {
                    f.error("s", "give either \"s\" or \"matrix\", not both");
                    None
                }
                (None, None) => {
                    if !payload.contains_key("s") && !payload.contains_key("matrix") {
                        f.error("s", "missing required field (or \"matrix\")");
                    }
                    None
                }
            };
            f.finish();
            let spec = spec.and_then(|s| check(local, "payload.norm", s.validate().map(|_| s.clone())));
            Some(Payload::Norm { input: input?, spec: spec? })
        }
        Command::Condenser => {
            let (t, p, q) = parse_condenser_input(&mut f);
            let specs: Option<NormSpecs> = f.req("norm");
            f.finish();
            let problem = build_condenser_input(local, t, p, q);
            let specs = match (specs, &problem) {
                (Some(s), Some(pr)) => check(local, "payload.norm", s.validate(pr.tuple.len()).map(|_| s.clone())),
                (s, _) => s,
            };
            Some(Payload::Condenser { problem: problem?, specs: specs? })
        }
        Command::Graphcap | Command::Transfer => {
            let group: Option<GroupSpec> = f.req("group");
            let radius: Option<usize> = f.opt("R");
            let radii: Option<Vec<usize>> = if command == Command::Graphcap { f.opt("radii") } else { None };
            let x1: Option<VertexSet> = f.req("x1");
            let x2: Option<VertexSet> = f.opt("x2");
            let spec: Option<NormSpec> = f.req("norm");
            match (radius, &radii) {
                (None, None) => f.error("R", "missing required field"),
                (Some(_), Some(_)) => f.error("radii", "give either \"R\" or \"radii\", not both"),
                _ => {}
            }
            f.finish();
            let group = group.and_then(|g| check(local, "payload.group", g.validate().map(|_| g.clone())));
            let spec = spec.and_then(|s| check(local, "payload.norm", s.validate().map(|_| s.clone())));
            if radii.is_some() && spec.as_ref().is_some_and(|s| s.schatten_p().is_none()) {
                local.push("payload.norm: a radius scan needs a schatten norm".into());
            }
            let default_x2 = if command == Command::Transfer { VertexSet::sphere() } else { VertexSet::empty() };
            let input = BallInput {
                group: group?,
                radius,
                radii,
                x1: x1?,
                x2: x2.unwrap_or(default_x2),
                spec: spec?,
            };
            if let Some(r) = input.radius {
                check(local, "payload", qcmod::cayley::build_ball(&input.group, r, &input.x1, &input.x2))?;
            }
            if input.radius.is_none() && input.radii.is_none() {
                return None;
            }
            Some(if command == Command::Graphcap { Payload::Graphcap(input) } else { Payload::Transfer(input) })
        }
        Command::Plaplace => {
            let (t, p_src, q_src) = parse_condenser_input(&mut f);
            let p: Option<f64> = f.req("p");
            let smooth: Option<bool> = f.opt("smooth");
            let trials: Option<usize> = f.opt("trials");
            let el_tol: Option<ElTolerances> = f.opt("el_tol");
            let _norm: Option<Value> = f.opt("norm");
            if smooth == Some(false) {
                f.error("smooth", "must be true for the plaplace command");
            }
            if trials.is_some_and(|t| t < 2) {
                f.error("trials", "must be at least 2");
            }
            f.finish();
            let problem = build_condenser_input(local, t, p_src, q_src);
            if let (Some(pr), Some(p)) = (&problem, p) {
                check(
                    local,
                    "payload",
                    qcmod::plaplace::SmoothProblem::new(
                        pr.tuple.clone(),
                        qcmod::operator::make_condenser(pr.tuple.dim(), &pr.p, &pr.q).ok()?,
                        p,
                    ),
                );
            }
            Some(Payload::Plaplace { problem: problem?, p: p?, trials, el_tol: el_tol.unwrap_or_default() })
        }
        Command::Experiment => {
            let kind: Option<String> = f.req("experiment");
            let schedule = f.raw("schedule").cloned();
            let models = f.raw("models").cloned();
            f.finish();
            let mut sched = match schedule {
                Some(Value::Object(m)) => m,
                Some(_) => {
                    local.push("payload.schedule: expected a JSON object".into());
                    Map::new()
                }
                None => {
                    local.push("payload.schedule: missing required field".into());
                    Map::new()
                }
            };
            let exp = match kind.as_deref() {
                Some("gamma1") => {
                    if models.is_some() {
                        local.push("payload.models: not used by the gamma1 experiment".into());
                    }
                    de(local, "payload.schedule", Value::Object(sched)).map(Experiment::Gamma1)
                }
                Some("ratio") => {
                    match models {
                        Some(m) => {
                            sched.insert("models".into(), m);
                        }
                        None => local.push("payload.models: missing required field".into()),
                    }
                    de(local, "payload.schedule", Value::Object(sched)).map(Experiment::Ratio)
                }
                Some("hybrid") => {
                    match models {
                        Some(Value::Array(mut v)) if v.len() == 1 => {
                            let m = v.remove(0);
                            let m = m.get("model").cloned().unwrap_or(m);
                            sched.insert("model".into(), m);
                        }
                        Some(_) => local.push("payload.models: the hybrid experiment takes exactly one model".into()),
                        None => local.push("payload.models: missing required field".into()),
                    }
                    de(local, "payload.schedule", Value::Object(sched)).map(Experiment::Hybrid)
                }
                Some(other) => {
                    local.push(format!(
                        "payload.experiment: unknown experiment \"{other}\"; allowed: gamma1, ratio, hybrid"
                    ));
                    None
                }
                None => None,
            };
            if let Some(Experiment::Hybrid(h)) = &exp {
                for (i, ps) in h.exponent_sets.iter().enumerate() {
                    check(
                        local,
                        &format!("payload.schedule.exponent_sets[{i}]"),
                        qcmod::experiments::validate_exponents(ps, h.model.n()),
                    );
                }
            }
            exp.map(Payload::Experiment)
        }
    }
}

fn de<T: DeserializeOwned>(errors: &mut Vec<String>, path: &str, v: Value) -> Option<T> {
    match serde_json::from_value(v) {
        Ok(t) => Some(t),
        Err(e) => {
            errors.push(format!("{path}: {e}"));
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigErrors> {
        parse_config(Some(text), &Overrides::default())
    }

    #[test]
    fn minimal_norm_command() {
        let c = parse(r#"{"command":"norm","payload":{"s":[3,4],"norm":{"kind":"schatten","p":2}}}"#).unwrap();
        assert_eq!(c.command, Command::Norm);
    }

    #[test]
    fn missing_norm_is_reported_with_its_path() {
        let e = parse(r#"{"command":"norm","payload":{"s":[3,4]}}"#).unwrap_err();
        assert!(e.0.iter().any(|m| m.starts_with("payload.norm") && m.contains("missing")), "{e}");
    }

    #[test]
    fn unknown_command_lists_allowed() {
        let e = parse(r#"{"command":"nrom","payload":{}}"#).unwrap_err();
        assert!(e.0[0].contains("norm, condenser, graphcap, transfer, plaplace, experiment"), "{e}");
    }

    #[test]
    fn all_errors_are_collected() {
        let e = parse(r#"{"command":"condenser","payload":{"tuple":{"components":[]},"norm":{"kind":"bogus"},"extra":1}}"#)
            .unwrap_err();
        let joined = e.0.join("\n");
        for needle in ["payload.P", "payload.Q", "payload.norm", "payload.extra"] {
            assert!(joined.contains(needle), "{needle} missing from {joined}");
        }
    }

    #[test]
    fn overrides_win() {
        let ov = Overrides { seed: Some(7), tol: Some(1e-6), ..Default::default() };
        let c = parse_config(
            Some(r#"{"command":"norm","seed":3,"payload":{"s":[1],"norm":{"kind":"macaev"}}}"#),
            &ov,
        )
        .unwrap();
        assert_eq!(c.options.seed, 7);
        assert_eq!(c.options.tol, 1e-6);
    }
}
