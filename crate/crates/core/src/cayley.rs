//! Balls in Cayley graphs, nonlinear condenser capacities on them, and the
//! comparison with the condenser modulus of the truncated left regular
//! representation.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::norms::{self, NormSpec};
use crate::operator::{self, ContractionVariable, NormSpecs, OperatorTuple, ProjectionSource};
use crate::solver::{
    self, extrapolate, minimize, ConvexMaxProblem, Eval, Extrapolation, ExtrapolationFit, GradMode, HistoryRow,
    SolveOptions, SolveReport,
};

/// A finitely generated group with a chosen generating tuple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum GroupSpec {
    /// `Z^d` with the standard basis.
    #[serde(rename = "Z^d")]
    Lattice { d: usize },
    /// Free group on `k` letters.
    #[serde(rename = "free")]
    Free { k: usize },
    /// Generators given as permutation tables of a finite vertex set; vertex
    /// 0 is the identity and `tables[j][h]` is `g_j h`.
    #[serde(rename = "custom")]
    Custom { tables: Vec<Vec<usize>> },
}

impl GroupSpec {
    pub fn lattice(d: usize) -> Self {
        GroupSpec::Lattice { d }
    }

    pub fn free(k: usize) -> Self {
        GroupSpec::Free { k }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GroupSpec::Lattice { d: 0 } => Err(Error::Validation("Z^d needs d >= 1".into())),
            GroupSpec::Free { k: 0 } => Err(Error::Validation("free group needs k >= 1".into())),
            GroupSpec::Custom { tables } => {
                if tables.is_empty() {
                    return Err(Error::Validation("custom group needs at least one generator".into()));
                }
                let n = tables[0].len();
                if n == 0 {
                    return Err(Error::Validation("custom vertex set is empty".into()));
                }
                for (j, t) in tables.iter().enumerate() {
                    if t.len() != n {
                        return Err(Error::Validation(format!("table {j} has length {}, expected {n}", t.len())));
                    }
                    let mut seen = vec![false; n];
                    for &v in t {
                        if v >= n || seen[v] {
                            return Err(Error::Validation(format!("table {j} is not a bijection")));
                        }
                        seen[v] = true;
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn n_generators(&self) -> usize {
        match self {
            GroupSpec::Lattice { d } => *d,
            GroupSpec::Free { k } => *k,
            GroupSpec::Custom { tables } => tables.len(),
        }
    }

    fn identity(&self) -> Element {
        match self {
            GroupSpec::Lattice { d } => Element::Lattice(vec![0; *d]),
            GroupSpec::Free { .. } => Element::Word(Vec::new()),
            GroupSpec::Custom { .. } => Element::Vertex(0),
        }
    }

    /// `g_j^{sign} h`.
    fn act(&self, j: usize, inverse: bool, h: &Element) -> Element {
        match (self, h) {
            (GroupSpec::Lattice { .. }, Element::Lattice(v)) => {
                let mut v = v.clone();
                v[j] += if inverse { -1 } else { 1 };
                Element::Lattice(v)
            }
            (GroupSpec::Free { .. }, Element::Word(w)) => {
                let letter = (j as i32 + 1) * if inverse { -1 } else { 1 };
                let mut out = Vec::with_capacity(w.len() + 1);
                if w.first() == Some(&-letter) {
                    out.extend_from_slice(&w[1..]);
                } else {
                    out.push(letter);
                    out.extend_from_slice(w);
                }
                Element::Word(out)
            }
            (GroupSpec::Custom { tables }, Element::Vertex(v)) => {
                let t = &tables[j];
                if inverse {
                    Element::Vertex(t.iter().position(|&x| x == *v).expect("bijection"))
                } else {
                    Element::Vertex(t[*v])
                }
            }
            _ => unreachable!("element kind matches group kind"),
        }
    }

    /// Parses a descriptor entry (coordinates, letters, or a vertex id).
    fn element_from(&self, raw: &[i64]) -> Result<Element> {
        match self {
            GroupSpec::Lattice { d } => {
                if raw.len() != *d {
                    return Err(Error::Validation(format!("lattice element needs {d} coordinates")));
                }
                Ok(Element::Lattice(raw.to_vec()))
            }
            GroupSpec::Free { k } => {
                let mut w: Vec<i32> = Vec::new();
                for &l in raw.iter().rev() {
                    if l == 0 || l.unsigned_abs() as usize > *k {
                        return Err(Error::Validation(format!("letter {l} outside +-1..+-{k}")));
                    }
                    let l = l as i32;
                    if w.first() == Some(&-l) {
                        w.remove(0);
                    } else {
                        w.insert(0, l);
                    }
                }
                Ok(Element::Word(w))
            }
            GroupSpec::Custom { tables } => match raw {
                [v] if *v >= 0 && (*v as usize) < tables[0].len() => Ok(Element::Vertex(*v as usize)),
                _ => Err(Error::Validation("custom element must be a single vertex id".into())),
            },
        }
    }
}

/// A group element in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Element {
    Lattice(Vec<i64>),
    /// Reduced word; letter `+-j` is `g_j^{+-1}`, leftmost letter acts last.
    Word(Vec<i32>),
    Vertex(usize),
}

fn letter_rank(l: i32) -> u32 {
    let a = l.unsigned_abs() - 1;
    2 * a + u32::from(l < 0)
}

/// Marked vertex sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexSet {
    /// `"origin"`, `"sphere"` (word length exactly `R`), or `"empty"`.
    Named(String),
    /// Word lengths in `[min_length, max_length]`.
    Shell {
        min_length: usize,
        #[serde(default)]
        max_length: Option<usize>,
    },
    Elements(Vec<Vec<i64>>),
}

impl VertexSet {
    pub fn origin() -> Self {
        VertexSet::Named("origin".into())
    }

    pub fn sphere() -> Self {
        VertexSet::Named("sphere".into())
    }

    pub fn empty() -> Self {
        VertexSet::Named("empty".into())
    }

    pub fn shell(min_length: usize) -> Self {
        VertexSet::Shell { min_length, max_length: None }
    }
}

/// The ball of radius `R` about the identity, vertices in canonical order
/// (word length, then lexicographic).
#[derive(Clone, Debug)]
pub struct CayleyBall {
    group: GroupSpec,
    radius: usize,
    elements: Vec<Element>,
    lengths: Vec<usize>,
    /// `forward[j][h]`: index of `g_j h` when inside the ball.
    forward: Vec<Vec<Option<usize>>>,
    /// `backward[j][v]`: index of `g_j^{-1} v` when inside the ball.
    backward: Vec<Vec<Option<usize>>>,
    x1: Vec<usize>,
    x2: Vec<usize>,
}

fn enumerate(group: &GroupSpec, radius: usize) -> (Vec<Element>, Vec<usize>) {
    let mut out: Vec<(usize, Element)> = Vec::new();
    match group {
        GroupSpec::Lattice { d } => {
            let r = radius as i64;
            let mut cur = vec![-r; *d];
            'odometer: loop {
                let len: i64 = cur.iter().map(|x| x.abs()).sum();
                if len <= r {
                    out.push((len as usize, Element::Lattice(cur.clone())));
                }
                let mut i = d - 1;
                loop {
                    if cur[i] < r {
                        cur[i] += 1;
                        break;
                    }
                    cur[i] = -r;
                    if i == 0 {
                        break 'odometer;
                    }
                    i -= 1;
                }
            }
            out.sort();
        }
        GroupSpec::Free { k } => {
            let letters: Vec<i32> = (1..=*k as i32).flat_map(|j| [j, -j]).collect();
            let mut layer: Vec<Vec<i32>> = vec![Vec::new()];
            out.push((0, Element::Word(Vec::new())));
            for len in 1..=radius {
                let mut next = Vec::new();
                for w in &layer {
                    for &l in &letters {
                        if w.last() == Some(&-l) {
                            continue;
                        }
                        let mut nw = w.clone();
                        nw.push(l);
                        next.push(nw);
                    }
                }
                next.sort_by(|a, b| {
                    a.iter().map(|&l| letter_rank(l)).cmp(b.iter().map(|&l| letter_rank(l)))
                });
                out.extend(next.iter().map(|w| (len, Element::Word(w.clone()))));
                layer = next;
            }
        }
        GroupSpec::Custom { .. } => {
            let n_gen = group.n_generators();
            let mut dist: HashMap<Element, usize> = HashMap::new();
            let start = group.identity();
            dist.insert(start.clone(), 0);
            let mut queue = VecDeque::from([start]);
            while let Some(h) = queue.pop_front() {
                let dh = dist[&h];
                if dh == radius {
                    continue;
                }
                for j in 0..n_gen {
                    for inv in [false, true] {
                        let g = group.act(j, inv, &h);
                        if !dist.contains_key(&g) {
                            dist.insert(g.clone(), dh + 1);
                            queue.push_back(g);
                        }
                    }
                }
            }
            out = dist.into_iter().map(|(e, l)| (l, e)).collect();
            out.sort();
        }
    }
    out.into_iter().map(|(l, e)| (e, l)).unzip()
}

pub fn build_ball(group: &GroupSpec, radius: usize, x1: &VertexSet, x2: &VertexSet) -> Result<CayleyBall> {
    group.validate()?;
    let (elements, lengths) = enumerate(group, radius);
    let index: HashMap<&Element, usize> = elements.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let n_gen = group.n_generators();
    let mut forward = vec![vec![None; elements.len()]; n_gen];
    let mut backward = vec![vec![None; elements.len()]; n_gen];
    for j in 0..n_gen {
        for (h, e) in elements.iter().enumerate() {
            forward[j][h] = index.get(&group.act(j, false, e)).copied();
            backward[j][h] = index.get(&group.act(j, true, e)).copied();
        }
    }
    let resolve = |set: &VertexSet, name: &str| -> Result<Vec<usize>> {
        let mut idx: Vec<usize> = match set {
            VertexSet::Named(s) => match s.as_str() {
                "origin" => vec![0],
                "sphere" => (0..elements.len()).filter(|&i| lengths[i] == radius).collect(),
                "empty" => Vec::new(),
                other => {
                    return Err(Error::Validation(format!(
                        "{name}: unknown vertex set '{other}' (expected origin, sphere, empty)"
                    )))
                }
            },
            VertexSet::Shell { min_length, max_length } => {
                let hi = max_length.unwrap_or(radius);
                (0..elements.len()).filter(|&i| lengths[i] >= *min_length && lengths[i] <= hi).collect()
            }
            VertexSet::Elements(list) => list
                .iter()
                .map(|raw| {
                    let e = group.element_from(raw)?;
                    index
                        .get(&e)
                        .copied()
                        .ok_or_else(|| Error::Validation(format!("{name}: element {raw:?} outside the ball")))
                })
                .collect::<Result<_>>()?,
        };
        idx.sort_unstable();
        idx.dedup();
        Ok(idx)
    };
    let x1 = resolve(x1, "X1")?;
    let x2 = resolve(x2, "X2")?;
    if let Some(v) = x1.iter().find(|v| x2.binary_search(v).is_ok()) {
        return Err(Error::Validation(format!("X1 and X2 share vertex {v}")));
    }
    Ok(CayleyBall { group: group.clone(), radius, elements, lengths, forward, backward, x1, x2 })
}

impl CayleyBall {
    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn n_vertices(&self) -> usize {
        self.elements.len()
    }

    pub fn n_generators(&self) -> usize {
        self.forward.len()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn word_length(&self, v: usize) -> usize {
        self.lengths[v]
    }

    /// Index of `g_j h`, if inside the ball.
    pub fn step(&self, j: usize, h: usize) -> Option<usize> {
        self.forward[j][h]
    }

    pub fn x1(&self) -> &[usize] {
        &self.x1
    }

    pub fn x2(&self) -> &[usize] {
        &self.x2
    }

    pub fn index_of(&self, e: &Element) -> Option<usize> {
        self.elements.iter().position(|x| x == e)
    }

    /// Vertices outside `X1 ∪ X2`, ascending.
    pub fn free_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices())
            .filter(|v| self.x1.binary_search(v).is_err() && self.x2.binary_search(v).is_err())
            .collect()
    }

    /// Edges of generator `j` as `(g_j h, h)`, `None` meaning outside the ball,
    /// covering every edge with at least one endpoint inside.
    pub fn edges(&self, j: usize) -> Vec<(Option<usize>, Option<usize>)> {
        let mut e: Vec<_> = (0..self.n_vertices()).map(|h| (self.forward[j][h], Some(h))).collect();
        e.extend((0..self.n_vertices()).filter(|&v| self.backward[j][v].is_none()).map(|v| (Some(v), None)));
        e
    }

    /// Edge differences `u(g_j h) - u(h)` for every generator; `u` vanishes
    /// outside the ball.
    pub fn edge_differences(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let at = |v: Option<usize>| v.map_or(0.0, |i| u[i]);
        (0..self.n_generators()).map(|j| self.edges(j).iter().map(|&(a, b)| at(a) - at(b)).collect()).collect()
    }

    /// `max_j |u(g_j .) - u(.)|_J`.
    pub fn capacity_objective(&self, u: &[f64], spec: &NormSpec) -> Result<f64> {
        let mut best = 0.0_f64;
        for d in self.edge_differences(u) {
            best = best.max(norms::vector_norm(&d, spec)?);
        }
        Ok(best)
    }
}

#[derive(Clone, Copy, Debug)]
enum End {
    Var(usize),
    Const(f64),
}

/// The capacity problem in the free-vertex values.
struct GraphProblem {
    n_free: usize,
    /// Per generator: edges as `(plus, minus)` endpoints.
    edges: Vec<Vec<(End, End)>>,
    spec: NormSpec,
    power: Option<f64>,
}

impl GraphProblem {
    fn new(ball: &CayleyBall, spec: &NormSpec) -> Self {
        let free = ball.free_vertices();
        let mut var_of = vec![None; ball.n_vertices()];
        for (k, &v) in free.iter().enumerate() {
            var_of[v] = Some(k);
        }
        let end = |v: Option<usize>| match v {
            None => End::Const(0.0),
            Some(i) => match var_of[i] {
                Some(k) => End::Var(k),
                None if ball.x1.binary_search(&i).is_ok() => End::Const(1.0),
                None => End::Const(0.0),
            },
        };
        let edges = (0..ball.n_generators())
            .map(|j| {
                ball.edges(j)
                    .into_iter()
                    .map(|(a, b)| (end(a), end(b)))
                    .filter(|e| match e {
                        (End::Const(x), End::Const(y)) => x != y,
                        _ => true,
                    })
                    .collect()
            })
            .collect();
        let power = spec.schatten_p().filter(|&p| p > 1.0);
        Self { n_free: free.len(), edges, spec: spec.clone(), power }
    }
}

impl ConvexMaxProblem for GraphProblem {
    fn dim(&self) -> usize {
        self.n_free
    }

    fn n_components(&self) -> usize {
        self.edges.len()
    }

    fn evaluate(&self, x: &[f64], mode: GradMode) -> Result<Eval> {
        let val = |e: End| match e {
            End::Var(k) => x[k],
            End::Const(c) => c,
        };
        let diffs: Vec<Vec<f64>> =
            self.edges.iter().map(|es| es.iter().map(|&(a, b)| val(a) - val(b)).collect()).collect();
        let values = diffs.iter().map(|d| norms::vector_norm(d, &self.spec)).collect::<Result<Vec<_>>>()?;
        let active = solver_argmax(&values);
        let mut grads = Vec::with_capacity(diffs.len());
        for (j, d) in diffs.iter().enumerate() {
            let want = mode == GradMode::All || (mode == GradMode::Active && j == active);
            if !want {
                grads.push(None);
                continue;
            }
            let w = norms::vector_subgradient(d, &self.spec)?;
            let mut g = vec![0.0; self.n_free];
            for (&(a, b), wi) in self.edges[j].iter().zip(&w) {
                if let End::Var(k) = a {
                    g[k] += wi;
                }
                if let End::Var(k) = b {
                    g[k] -= wi;
                }
            }
            grads.push(Some(g));
        }
        Ok(Eval { values, grads })
    }

    fn project(&self, x: &mut [f64]) -> Result<()> {
        x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(())
    }

    fn diameter(&self) -> f64 {
        (self.n_free as f64).sqrt()
    }

    fn smooth_power(&self) -> Option<f64> {
        self.power
    }

    fn center(&self) -> Vec<f64> {
        vec![0.5; self.n_free]
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.n_free).map(|_| rng.random::<f64>()).collect()
    }
}

fn solver_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..v.len() {
        if v[j] > v[best] {
            best = j;
        }
    }
    best
}

fn full_potential(ball: &CayleyBall, free_values: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; ball.n_vertices()];
    for &v in &ball.x1 {
        u[v] = 1.0;
    }
    for (k, v) in ball.free_vertices().into_iter().enumerate() {
        u[v] = free_values[k];
    }
    u
}

fn potential_residuals(ball: &CayleyBall, u: &[f64]) -> BTreeMap<String, f64> {
    let pin1 = ball.x1.iter().map(|&v| (u[v] - 1.0).abs()).fold(0.0, f64::max);
    let pin2 = ball.x2.iter().map(|&v| u[v].abs()).fold(0.0, f64::max);
    let bx = u.iter().map(|&x| (-x).max(x - 1.0).max(0.0)).fold(0.0, f64::max);
    BTreeMap::from([("box".to_string(), bx), ("pin_x1".to_string(), pin1), ("pin_x2".to_string(), pin2)])
}

/// `cap_J(X1, X2)` with potentials supported in the ball. The minimizer is
/// the potential on all ball vertices.
pub fn graph_capacity(ball: &CayleyBall, spec: &NormSpec, opts: &SolveOptions) -> Result<SolveReport<Vec<f64>>> {
    graph_capacity_from(ball, spec, opts, None)
}

/// As [`graph_capacity`], with an optional warm-start potential on all
/// vertices.
pub fn graph_capacity_from(
    ball: &CayleyBall,
    spec: &NormSpec,
    opts: &SolveOptions,
    warm: Option<&[f64]>,
) -> Result<SolveReport<Vec<f64>>> {
    let start = Instant::now();
    spec.validate()?;
    opts.validate()?;
    let mut flags = Vec::new();
    if ball.x1.is_empty() {
        flags.push("empty_inner_plate".to_string());
        let u = vec![0.0; ball.n_vertices()];
        return Ok(SolveReport {
            value: 0.0,
            feasibility_residuals: potential_residuals(ball, &u),
            minimizer: u,
            history: vec![HistoryRow { iter: 0, objective: 0.0, step: 0.0 }],
            restart_values: vec![0.0],
            converged: true,
            iters: 0,
            method: opts.method,
            wall_time: start.elapsed().as_secs_f64(),
            flags,
        });
    }
    let prob = GraphProblem::new(ball, spec);
    if prob.n_free == 0 {
        flags.push("single_feasible_point".to_string());
        let u = full_potential(ball, &[]);
        let value = ball.capacity_objective(&u, spec)?;
        return Ok(SolveReport {
            value,
            feasibility_residuals: potential_residuals(ball, &u),
            minimizer: u,
            history: vec![HistoryRow { iter: 0, objective: value, step: 0.0 }],
            restart_values: vec![value],
            converged: true,
            iters: 0,
            method: opts.method,
            wall_time: start.elapsed().as_secs_f64(),
            flags,
        });
    }
    let warm_free: Option<Vec<f64>> = match warm {
        Some(w) if w.len() != ball.n_vertices() => {
            return Err(Error::Dimension("warm potential has the wrong length".into()))
        }
        Some(w) => Some(ball.free_vertices().into_iter().map(|v| w[v]).collect()),
        None => None,
    };
    let res = minimize(&prob, opts, warm_free.as_deref())?;
    if !res.converged {
        flags.push("not_converged".to_string());
    }
    let u = full_potential(ball, &res.x);
    Ok(SolveReport {
        value: res.value,
        feasibility_residuals: potential_residuals(ball, &u),
        minimizer: u,
        history: res.history,
        restart_values: res.restart_values,
        converged: res.converged,
        iters: res.iters,
        method: res.method,
        wall_time: start.elapsed().as_secs_f64(),
        flags,
    })
}

/// Compressions of `lambda(g_j)` to `l^2(ball)`: `(lambda_j)_{h', h} = 1` iff
/// `h' = g_j h` with both in the ball.
pub fn truncated_regular_rep(ball: &CayleyBall) -> Result<OperatorTuple> {
    let n = ball.n_vertices();
    let comps = (0..ball.n_generators())
        .map(|j| {
            let mut m = CMat::zeros(n, n);
            for h in 0..n {
                if let Some(hp) = ball.forward[j][h] {
                    m[(hp, h)] = c(1.0);
                }
            }
            m
        })
        .collect();
    OperatorTuple::general(comps)
}

/// Graph capacity against the condenser modulus of the truncated left
/// regular representation with the coordinate plates `l^2(X1)`, `l^2(X2)`.
#[derive(Clone, Debug)]
pub struct TransferReport {
    pub cap_value: f64,
    pub k_value: f64,
    /// `cap - k`.
    pub gap: f64,
    pub relative_gap: f64,
    /// `k <= cap + 1e-9 max(1, cap)`.
    pub inequality_holds: bool,
    pub cap_converged: bool,
    pub k_converged: bool,
    pub cap_report: SolveReport<Vec<f64>>,
    pub k_report: SolveReport<ContractionVariable>,
}

pub const TRANSFER_SLACK: f64 = 1e-9;

pub fn verify_transfer(ball: &CayleyBall, spec: &NormSpec, opts: &SolveOptions) -> Result<TransferReport> {
    let cap = graph_capacity(ball, spec, opts)?;
    let tuple = truncated_regular_rep(ball)?;
    let cond = operator::make_condenser(
        ball.n_vertices(),
        &ProjectionSource::Indices(ball.x1.clone()),
        &ProjectionSource::Indices(ball.x2.clone()),
    )?;
    // the multiplication operator by the optimal potential is feasible
    let free = ball.free_vertices();
    let mu = linalg::diag_real(&free.iter().map(|&v| cap.minimizer[v]).collect::<Vec<_>>());
    let warm = ContractionVariable::new(mu)?;
    let k = solver::solve_condenser_from(&tuple, &cond, &NormSpecs::Single(spec.clone()), opts, Some(&warm))?;
    let gap = cap.value - k.value;
    let relative_gap = if cap.value > 0.0 { gap.abs() / cap.value } else { gap.abs() };
    Ok(TransferReport {
        cap_value: cap.value,
        k_value: k.value,
        gap,
        relative_gap,
        inequality_holds: k.value <= cap.value + TRANSFER_SLACK * cap.value.max(1.0),
        cap_converged: cap.converged,
        k_converged: k.converged,
        cap_report: cap,
        k_report: k,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(rename = "R")]
    pub radius: usize,
    pub n_vertices: usize,
    pub value: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicityReport {
    pub rows: Vec<ScanRow>,
    pub fit: ExtrapolationFit,
    /// `"positive"`, `"vanishing"`, or `"undetermined"`.
    pub classification: String,
    /// Indices `i` with `value[i + 1] > value[i] + tol scale`.
    pub monotonicity_warnings: Vec<usize>,
}

/// Capacities of `X1` against the outside of growing balls, with the Schatten
/// `p` norm, and a trend classification.
pub fn parabolicity_scan(
    group: &GroupSpec,
    p: f64,
    x1: &VertexSet,
    radii: &[usize],
    opts: &SolveOptions,
) -> Result<ParabolicityReport> {
    if radii.len() < 3 || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation("radii must be increasing with at least 3 entries".into()));
    }
    let spec = NormSpec::schatten(p);
    spec.validate()?;
    let rows: Vec<Result<ScanRow>> = radii
        .par_iter()
        .map(|&r| {
            let ball = build_ball(group, r, x1, &VertexSet::empty())?;
            let rep = graph_capacity(&ball, &spec, opts)?;
            Ok(ScanRow { radius: r, n_vertices: ball.n_vertices(), value: rep.value, converged: rep.converged })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.radius as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let fit = extrapolate(&xs, &ys, Extrapolation::PowerFit);
    let warnings = (0..rows.len() - 1)
        .filter(|&i| ys[i + 1] > ys[i] + 10.0 * opts.tol * ys[i].max(1.0))
        .collect();
    let n = ys.len();
    let (a, b) = (ys[n - 2], ys[n - 1]);
    let classification = if b > 10.0 * opts.tol && (a - b).abs() < 0.05 * a.max(b) {
        "positive"
    } else if fit.loglog_slope.is_some_and(|s| s < -0.1) && fit.loglog_r2.is_some_and(|r2| r2 >= 0.95) {
        "vanishing"
    } else {
        "undetermined"
    };
    Ok(ParabolicityReport { rows, fit, classification: classification.into(), monotonicity_warnings: warnings })
}

/// Number of elements of word length at most `R` in `F_k`.
pub fn free_ball_size(k: usize, radius: usize) -> usize {
    if k == 1 {
        return 2 * radius + 1;
    }
    let q = 2 * k - 1;
    1 + 2 * k * (q.pow(radius as u32) - 1) / (q - 1)
}
