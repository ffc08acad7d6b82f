//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Pass criterion numbers as arguments to run a subset. The process exits
//! nonzero only when a gating check fails; the parabolicity bound at
//! `R = 200` and the time-frequency ratio are reported without gating (see
//! README).

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use qcmod::cayley::{self, build_ball, CayleyBall, GroupSpec, VertexSet};
use qcmod::experiments::{gamma1_experiment, Gamma1Config, RankRule};
use qcmod::io;
use qcmod::linalg::{self, c, random_contraction, random_gaussian, random_hermitian, random_unitary, real_matrix, CMat};
use qcmod::norms::{self, NormSpec};
use qcmod::operator::{make_condenser, Condenser, ContractionVariable, NormSpecs, OperatorTuple, ProjectionSource};
use qcmod::plaplace::{self, ElTolerances, SmoothProblem};
use qcmod::solver::{solve_condenser, Extrapolation, SolveOptions};

struct Verdict {
    pass: bool,
    /// The checks that fail the process when missed all hold.
    gate_ok: bool,
    detail: String,
}

impl Verdict {
    fn hard(pass: bool, detail: String) -> Self {
        Self { pass, gate_ok: pass, detail }
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Verdict) -> Verdict {
    let t = Instant::now();
    let mut v = f();
    let el = t.elapsed();
    v.detail = format!("{}; runtime {:.1}s (limit {}s)", v.detail, el.as_secs_f64(), limit.as_secs());
    // a runtime overrun is reported but does not fail the process
    if el > limit {
        v.pass = false;
    }
    v
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn tridiagonal() -> (OperatorTuple, Condenser) {
    let t = OperatorTuple::selfadjoint(vec![real_matrix(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]])])
        .unwrap();
    let cond = make_condenser(3, &ProjectionSource::Indices(vec![0]), &ProjectionSource::Indices(vec![2])).unwrap();
    (t, cond)
}

/// `min_t |[diag(1, t, 0), T]|_J` by a grid followed by golden-section refinement.
fn grid_oracle(t: &CMat, spec: &NormSpec) -> f64 {
    let f = |s: f64| {
        let a = linalg::diag_real(&[1.0, s, 0.0]);
        norms::matrix_norm(&linalg::commutator(&a, t), spec).unwrap()
    };
    let n: usize = 10_000;
    let best = (0..=n).min_by(|&i, &j| f(i as f64 / n as f64).total_cmp(&f(j as f64 / n as f64))).unwrap();
    let (mut lo, mut hi) = (best.saturating_sub(1) as f64 / n as f64, ((best + 1).min(n)) as f64 / n as f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(x1) <= f(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    f(0.5 * (lo + hi))
}

fn criterion_1() -> Verdict {
    let (tuple, cond) = tridiagonal();
    let cases = [
        ("schatten 2", NormSpec::schatten(2.0), 1.0),
        ("schatten 1", NormSpec::schatten(1.0), 2f64.sqrt()),
        ("lorentz (2,1)", NormSpec::lorentz(2.0), 0.5 + 0.5f64.sqrt()),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, spec, exact) in cases {
        let t0 = Instant::now();
        let r = solve_condenser(&tuple, &cond, &NormSpecs::Single(spec.clone()), &SolveOptions::default()).unwrap();
        let el = t0.elapsed().as_secs_f64();
        let oracle = grid_oracle(tuple.component(0), &spec);
        let good = rel(r.value, oracle) <= 1e-6 && rel(oracle, exact) <= 1e-6 && el < 1.0;
        ok &= good;
        parts.push(format!("{name}: {:.10} vs oracle {:.10} ({el:.2}s)", r.value, oracle));
    }
    Verdict::hard(ok, parts.join(", "))
}

/// Minimal total variation `max_j sum |du|` through an LP.
fn tv_oracle(ball: &CayleyBall) -> f64 {
    assert_eq!(ball.n_generators(), 1);
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let x1 = ball.x1().to_vec();
    let x2 = ball.x2().to_vec();
    let u: Vec<_> = (0..ball.n_vertices())
        .map(|v| {
            let b = if x1.contains(&v) {
                (1.0, 1.0)
            } else if x2.contains(&v) {
                (0.0, 0.0)
            } else {
                (0.0, 1.0)
            };
            lp.add_var(0.0, b)
        })
        .collect();
    for (a, b) in ball.edges(0) {
        let t = lp.add_var(1.0, (0.0, f64::INFINITY));
        let mut terms = vec![(t, 1.0)];
        let mut neg = vec![(t, 1.0)];
        if let Some(a) = a {
            terms.push((u[a], -1.0));
            neg.push((u[a], 1.0));
        }
        if let Some(b) = b {
            terms.push((u[b], 1.0));
            neg.push((u[b], -1.0));
        }
        lp.add_constraint(terms.as_slice(), ComparisonOp::Ge, 0.0);
        lp.add_constraint(neg.as_slice(), ComparisonOp::Ge, 0.0);
    }
    lp.solve().unwrap().objective()
}

fn criterion_2() -> Verdict {
    let ball = build_ball(&GroupSpec::lattice(1), 50, &VertexSet::origin(), &VertexSet::empty()).unwrap();
    let t0 = Instant::now();
    let r = cayley::graph_capacity(&ball, &NormSpec::schatten(1.0), &SolveOptions::default()).unwrap();
    let el = t0.elapsed().as_secs_f64();
    let oracle = tv_oracle(&ball);
    let ok = (r.value - 2.0).abs() <= 1e-6 && (oracle - 2.0).abs() <= 1e-9 && el < 5.0;
    Verdict::hard(ok, format!("value {:.10}, LP oracle {oracle:.10}, solve {el:.2}s", r.value))
}

/// `sqrt(E / d)` with `E` the minimal Dirichlet energy, by conjugate gradients.
fn harmonic_oracle(ball: &CayleyBall) -> f64 {
    let n = ball.n_vertices();
    let mut fixed = vec![None; n];
    for &v in ball.x1() {
        fixed[v] = Some(1.0);
    }
    for &v in ball.x2() {
        fixed[v] = Some(0.0);
    }
    let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
    let mut slot = vec![usize::MAX; n];
    for (i, &v) in free.iter().enumerate() {
        slot[v] = i;
    }
    let m = free.len();
    let mut diag = vec![0.0; m];
    let mut off: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut rhs = vec![0.0; m];
    let value = |v: Option<usize>| v.map_or(Some(0.0), |v| fixed[v]);
    for j in 0..ball.n_generators() {
        for (a, b) in ball.edges(j) {
            for (x, y) in [(a, b), (b, a)] {
                let Some(x) = x.filter(|&x| fixed[x].is_none()) else { continue };
                diag[slot[x]] += 1.0;
                match value(y) {
                    Some(val) => rhs[slot[x]] += val,
                    None => off[slot[x]].push((slot[y.unwrap()], -1.0)),
                }
            }
        }
    }
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..m).map(|i| diag[i] * x[i] + off[i].iter().map(|&(k, w)| w * x[k]).sum::<f64>()).collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; m];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = 1e-28 * dot(&rhs, &rhs);
    for _ in 0..10 * m + 100 {
        if rr <= stop {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        for i in 0..m {
            p[i] = r[i] + rr_new / rr * p[i];
        }
        rr = rr_new;
    }
    let mut u = vec![0.0; n];
    for v in 0..n {
        u[v] = fixed[v].unwrap_or_else(|| x[slot[v]]);
    }
    let energy: f64 = ball.edge_differences(&u).iter().flatten().map(|d| d * d).sum();
    (energy / ball.n_generators() as f64).sqrt()
}

fn criterion_3() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, radius) in [(1, 32), (2, 16), (3, 10)] {
        let ball = build_ball(&GroupSpec::lattice(d), radius, &VertexSet::origin(), &VertexSet::empty()).unwrap();
        let r = cayley::graph_capacity(&ball, &NormSpec::schatten(2.0), &SolveOptions::default()).unwrap();
        let oracle = harmonic_oracle(&ball);
        let e = rel(r.value, oracle);
        ok &= e <= 1e-6;
        parts.push(format!("Z^{d} R={radius}: {:.10} vs {oracle:.10} (rel {e:.1e})", r.value));
    }
    Verdict::hard(ok, parts.join(", "))
}

fn criterion_4() -> Verdict {
    let opts = SolveOptions::default();
    let scan = cayley::parabolicity_scan(&GroupSpec::lattice(1), 2.0, &VertexSet::origin(), &[25, 50, 100, 200], &opts)
        .unwrap();
    let last = scan.rows.last().unwrap().value;
    let slope = scan.fit.loglog_slope.unwrap_or(f64::NAN);
    let bound = last < 0.05;
    let exponent = (slope + 0.5).abs() <= 0.1;
    let caps: Vec<f64> = [10, 14]
        .par_iter()
        .map(|&radius| {
            let ball = build_ball(&GroupSpec::lattice(3), radius, &VertexSet::origin(), &VertexSet::empty()).unwrap();
            cayley::graph_capacity(&ball, &NormSpec::schatten(2.0), &opts).unwrap().value
        })
        .collect();
    let z3 = rel(caps[1], caps[0]) <= 0.05 && caps[0] > 0.1 && caps[1] > 0.1;
    Verdict {
        pass: bound && exponent && z3,
        gate_ok: exponent && z3,
        detail: format!(
            "Z p=2 R=200: {last:.5} (< 0.05: {}), exponent {slope:.4} (-0.5 +- 0.1: {}), Z^3 R=10/14: {:.5}/{:.5} ({})",
            yes(bound),
            yes(exponent),
            caps[0],
            caps[1],
            yes(z3)
        ),
    }
}

fn yes(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "miss"
    }
}

fn criterion_5() -> Verdict {
    let specs = [("schatten 1", NormSpec::schatten(1.0)), ("schatten 2", NormSpec::schatten(2.0)), ("lorentz (2,1)", NormSpec::lorentz(2.0))];
    let groups = [("Z R=8", GroupSpec::lattice(1), 8), ("F2 R=3", GroupSpec::free(2), 3)];
    let cases: Vec<_> = groups.iter().flat_map(|g| specs.iter().map(move |s| (g, s))).collect();
    let rows: Vec<_> = cases
        .par_iter()
        .map(|((gname, group, radius), (sname, spec))| {
            let ball = build_ball(group, *radius, &VertexSet::origin(), &VertexSet::sphere()).unwrap();
            (*gname, *sname, cayley::verify_transfer(&ball, spec, &SolveOptions::default()).unwrap())
        })
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (g, s, r) in &rows {
        ok &= r.k_value <= r.cap_value + 1e-9;
        if *s == "schatten 2" {
            ok &= r.relative_gap <= 1e-3;
        }
        parts.push(format!("{g} {s}: cap {:.6} k {:.6} gap {:.1e}", r.cap_value, r.k_value, r.relative_gap));
    }
    Verdict::hard(ok, parts.join(", "))
}

fn random_smooth_problem(seed: u64, p: f64) -> SmoothProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = OperatorTuple::selfadjoint(vec![random_hermitian(8, &mut rng), random_hermitian(8, &mut rng)]).unwrap();
    let cond = make_condenser(8, &ProjectionSource::Indices(vec![0, 1]), &ProjectionSource::Indices(vec![6, 7])).unwrap();
    SmoothProblem::new(t, cond, p).unwrap()
}

fn criterion_6() -> Verdict {
    let mut worst = 0.0_f64;
    let mut count = 0;
    for p in [2.0, 3.0, 4.0] {
        for seed in 0..20 {
            let prob = random_smooth_problem(seed, p);
            let cond = prob.condenser();
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let x = cond.embed(&ContractionVariable::new(random_contraction(4, &mut rng)).unwrap());
            let h = cond.from_block(&(cond.embed_block(&random_hermitian(4, &mut rng)) - cond.embed_block(&CMat::zeros(4, 4))));
            let eps = 1e-5;
            let fd = (plaplace::smooth_objective(&prob, &(&x + &h * c(eps))).unwrap()
                - plaplace::smooth_objective(&prob, &(&x - &h * c(eps))).unwrap())
                / (2.0 * eps);
            let an = -0.5 * p * (plaplace::theta(&prob, &x).unwrap() * &h).trace().re;
            worst = worst.max((fd - an).abs() / an.abs());
            count += 1;
        }
    }
    Verdict::hard(worst <= 1e-5, format!("{count} directional derivatives, worst relative error {worst:.2e}"))
}

fn dead_end_problem(p: f64) -> SmoothProblem {
    let t = OperatorTuple::selfadjoint(vec![real_matrix(&[
        &[0.0, 1.0, 0.0, 1.0],
        &[1.0, 0.0, 1.0, 0.0],
        &[0.0, 1.0, 0.0, 0.0],
        &[1.0, 0.0, 0.0, 0.0],
    ])])
    .unwrap();
    let cond = make_condenser(4, &ProjectionSource::Indices(vec![0]), &ProjectionSource::Indices(vec![2])).unwrap();
    SmoothProblem::new(t, cond, p).unwrap()
}

fn criterion_7() -> Verdict {
    let tol = ElTolerances::default();
    let opts = SolveOptions::default();
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut kkt_failures = 0;
    let mut exact = true;
    let mut dead_end_p1 = 0;
    let mut suite: Vec<(String, SmoothProblem)> = Vec::new();
    for p in [2.0, 3.0, 4.0] {
        let (t, cond) = tridiagonal();
        suite.push((format!("tridiagonal p={p}"), SmoothProblem::new(t, cond, p).unwrap()));
        suite.push((format!("dead end p={p}"), dead_end_problem(p)));
        for seed in 0..10 {
            suite.push((format!("random {seed} p={p}"), random_smooth_problem(1000 + seed, p)));
        }
    }
    let results: Vec<_> = suite
        .par_iter()
        .map(|(name, prob)| {
            let r = plaplace::minimize_smooth(prob, &opts).unwrap();
            let el = plaplace::euler_lagrange_report(prob, &r.minimizer, &tol).unwrap();
            (name, r.converged, el)
        })
        .collect();
    for (name, converged, el) in results {
        if !converged {
            continue;
        }
        checked += 1;
        if !el.passes() {
            failures.push(name.clone());
        }
        if !el.kkt_condition {
            kkt_failures += 1;
        }
        if name.starts_with("tridiagonal") {
            exact &= el.compression_eigs.iter().flatten().all(|e| e.abs() <= 1e-10);
        }
        if name.starts_with("dead end") {
            dead_end_p1 = dead_end_p1.max(el.p1_rank);
        }
    }
    let ok = failures.is_empty() && exact && checked == 36;
    Verdict::hard(
        ok,
        format!(
            "{checked}/36 converged minimizers certified, sign failures {:?}, KKT failures {kkt_failures}, \
             tridiagonal compressions zero: {}, dead-end rank P1 = {dead_end_p1}",
            failures,
            yes(exact)
        ),
    )
}

fn criterion_8() -> Verdict {
    let opts = SolveOptions::default();
    let rows: Vec<(u64, f64, f64, usize)> = (0..10u64)
        .into_par_iter()
        .map(|i| {
            let prob = random_smooth_problem(2000 + i, 3.0);
            let scale = prob.tuple().components().iter().map(|t| linalg::opnorm(t).unwrap()).fold(1.0, f64::max);
            let u = plaplace::uniqueness_probe(&prob, &opts.clone().with_seed(i), 4).unwrap();
            (i, u.max_commutator_distance, scale, u.excluded.len())
        })
        .collect();
    let ok = rows.iter().all(|&(_, d, s, ex)| d <= 1e-4 * s && ex == 0);
    let worst = rows.iter().map(|&(_, d, s, _)| d / s).fold(0.0, f64::max);
    let excluded: usize = rows.iter().map(|r| r.3).sum();
    Verdict::hard(ok, format!("10 instances x 4 seeds, worst distance/scale {worst:.2e}, unconverged {excluded}"))
}

const TRIALS: usize = 1000;

fn random_spec<R: Rng>(rng: &mut R) -> NormSpec {
    match rng.random_range(0..4) {
        0 => NormSpec::schatten(rng.random_range(1.0..6.0)),
        1 => NormSpec::schatten(1.0),
        2 => NormSpec::lorentz(rng.random_range(1.0..6.0)),
        _ => NormSpec::macaev(),
    }
}

/// Random tuple of one or two Hermitian components on `C^4`, `P = e_0`, `Q = e_3`.
fn random_condenser<R: Rng>(rng: &mut R) -> (OperatorTuple, Vec<usize>, Vec<usize>) {
    let comps = (0..rng.random_range(1..=2)).map(|_| random_hermitian(4, rng)).collect();
    (OperatorTuple::selfadjoint(comps).unwrap(), vec![0], vec![3])
}

fn k_value(t: &OperatorTuple, p: ProjectionSource, q: ProjectionSource, spec: NormSpec, opts: &SolveOptions) -> (f64, bool) {
    let cond = make_condenser(t.dim(), &p, &q).unwrap();
    let r = solve_condenser(t, &cond, &NormSpecs::Single(spec), opts).unwrap();
    (r.value, r.converged)
}

/// Violations over `TRIALS` seeded trials; unconverged solver trials are
/// counted separately and not scored.
fn trials(seed: u64, f: impl Fn(&mut ChaCha8Rng) -> Option<bool> + Sync) -> (usize, usize) {
    let out: Vec<Option<bool>> = (0..TRIALS)
        .into_par_iter()
        .map(|i| f(&mut ChaCha8Rng::seed_from_u64(seed * 1_000_003 + i as u64)))
        .collect();
    (out.iter().filter(|o| **o == Some(false)).count(), out.iter().filter(|o| o.is_none()).count())
}

fn criterion_9() -> Verdict {
    let fast = SolveOptions::default().with_restarts(1);
    let smooth = || NormSpec::schatten(2.0);
    let mut suites: Vec<(&str, (usize, usize))> = Vec::new();

    suites.push((
        "rearrangement",
        trials(1, |rng| {
            let n = rng.random_range(1..=20);
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mut t: Vec<f64> = s.iter().map(|x| if rng.random::<bool>() { -x } else { *x }).collect();
            t.shuffle(rng);
            let spec = random_spec(rng);
            let (a, b) = (norms::vector_norm(&s, &spec).unwrap(), norms::vector_norm(&t, &spec).unwrap());
            Some((a - b).abs() <= 1e-12 * a.max(1.0))
        }),
    ));

    suites.push((
        "ideal property",
        trials(2, |rng| {
            let n = rng.random_range(1..=6);
            let (a, x, b) = (random_gaussian(n, n, rng), random_gaussian(n, n, rng), random_gaussian(n, n, rng));
            let spec = random_spec(rng);
            let lhs = norms::matrix_norm(&(&a * &x * &b), &spec).unwrap();
            let rhs = linalg::opnorm(&a).unwrap() * norms::matrix_norm(&x, &spec).unwrap() * linalg::opnorm(&b).unwrap();
            Some(lhs <= rhs * (1.0 + 1e-10))
        }),
    ));

    suites.push((
        "homogeneity",
        trials(3, |rng| {
            let (t, p, q) = random_condenser(rng);
            let factor = rng.random_range(0.2..3.0) * if rng.random::<bool>() { -1.0 } else { 1.0 };
            let (k1, c1) = k_value(&t, ProjectionSource::Indices(p.clone()), ProjectionSource::Indices(q.clone()), smooth(), &fast);
            let (k2, c2) = k_value(&t.scaled(factor), ProjectionSource::Indices(p), ProjectionSource::Indices(q), smooth(), &fast);
            (c1 && c2).then(|| (k2 - factor.abs() * k1).abs() <= 1e-5 * k2.max(1.0))
        }),
    ));

    suites.push((
        "unitary covariance",
        trials(4, |rng| {
            let (t, p, q) = random_condenser(rng);
            let u = random_unitary(4, rng);
            let pm = linalg::diag_real(&[1.0, 0.0, 0.0, 0.0]);
            let qm = linalg::diag_real(&[0.0, 0.0, 0.0, 1.0]);
            let conj = |m: &CMat| &u * m * u.adjoint();
            let (k1, c1) = k_value(&t, ProjectionSource::Indices(p), ProjectionSource::Indices(q), smooth(), &fast);
            let (k2, c2) = k_value(
                &t.conjugated(&u),
                ProjectionSource::Matrix(conj(&pm)),
                ProjectionSource::Matrix(conj(&qm)),
                smooth(),
                &fast,
            );
            (c1 && c2).then(|| (k2 - k1).abs() <= 1e-5 * k1.max(1.0))
        }),
    ));

    suites.push((
        "monotonicity in Q",
        trials(5, |rng| {
            let comps = (0..rng.random_range(1..=2)).map(|_| random_hermitian(5, rng)).collect();
            let t = OperatorTuple::selfadjoint(comps).unwrap();
            let (k1, c1) = k_value(&t, ProjectionSource::Indices(vec![0]), ProjectionSource::Indices(vec![4]), smooth(), &fast);
            let (k2, c2) = k_value(&t, ProjectionSource::Indices(vec![0]), ProjectionSource::Indices(vec![3, 4]), smooth(), &fast);
            (c1 && c2).then(|| k1 <= k2 + 1e-6 * k2.max(1.0))
        }),
    ));

    let groups = [GroupSpec::lattice(1), GroupSpec::lattice(2), GroupSpec::free(2)];
    suites.push((
        "monotonicity in R",
        trials(6, |rng| {
            let g = &groups[rng.random_range(0..groups.len())];
            let radius = rng.random_range(1..=if matches!(g, GroupSpec::Free { .. }) { 2 } else { 4 });
            let spec = NormSpec::schatten(rng.random_range(1.5..4.0));
            let cap = |r: usize| {
                let ball = build_ball(g, r, &VertexSet::origin(), &VertexSet::empty()).unwrap();
                let rep = cayley::graph_capacity(&ball, &spec, &fast).unwrap();
                (rep.value, rep.converged)
            };
            let ((a, ca), (b, cb)) = (cap(radius), cap(radius + 1));
            (ca && cb).then(|| b <= a + 1e-6 * a.max(1.0))
        }),
    ));

    let restarts = SolveOptions::default().with_restarts(3);
    suites.push((
        "restart consistency",
        trials(7, |rng| {
            let (t, p, q) = random_condenser(rng);
            let cond = make_condenser(4, &ProjectionSource::Indices(p), &ProjectionSource::Indices(q)).unwrap();
            let r = solve_condenser(&t, &cond, &NormSpecs::Single(smooth()), &restarts.clone().with_seed(rng.random()))
                .unwrap();
            r.converged.then(|| r.restart_spread() <= 1e-5 * r.value.max(1.0))
        }),
    ));

    let ok = suites.iter().all(|(_, (v, _))| *v == 0);
    let detail = suites
        .iter()
        .map(|(name, (v, skipped))| format!("{name}: {v} violations ({skipped} unconverged)"))
        .collect::<Vec<_>>()
        .join(", ");
    Verdict::hard(ok, format!("{TRIALS} trials each; {detail}"))
}

fn archive_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance/gamma1")
}

fn criterion_10() -> Verdict {
    let cfg = Gamma1Config {
        scales: vec![64, 128, 256],
        m_rule: RankRule::Fraction { value: 1.0 / 16.0 },
        k_rule: RankRule::Fraction { value: 0.25 },
        spec: NormSpec::schatten(1.0),
        extrapolation: Extrapolation::PowerFit,
    };
    let opts = SolveOptions::default().with_restarts(1).with_max_iters(2000);
    let r = gamma1_experiment(&cfg, &opts).unwrap();
    let dir = archive_dir();
    let report = serde_json::to_value(&r).unwrap();
    let archived = io::write_file(&dir.join("report.json"), &io::to_json(&report).unwrap()).is_ok()
        && io::write_file(&dir.join("series.csv"), &io::series_csv(&r.sweep.points, r.estimate)).is_ok();
    let values: Vec<String> = r.sweep.points.iter().map(|p| format!("{:.5}", p.value)).collect();
    let in_band = r.ratio.is_some_and(|x| (0.5..=1.5).contains(&x));
    Verdict {
        pass: r.monotone && in_band && archived,
        gate_ok: archived,
        detail: format!(
            "values {} (converged: {}), monotone {}, estimate {:?}, ratio to 1/pi {:?}, archived {} [soft]",
            values.join("/"),
            r.all_converged,
            r.monotone,
            r.estimate,
            r.ratio,
            dir.display()
        ),
    }
}

fn main() {
    let criteria: [(usize, Duration, fn() -> Verdict); 10] = [
        (1, Duration::from_secs(3), criterion_1),
        (2, Duration::from_secs(5), criterion_2),
        (3, Duration::from_secs(60), criterion_3),
        (4, Duration::from_secs(300), criterion_4),
        (5, Duration::from_secs(600), criterion_5),
        (6, Duration::from_secs(60), criterion_6),
        (7, Duration::from_secs(600), criterion_7),
        (8, Duration::from_secs(600), criterion_8),
        (9, Duration::from_secs(600), criterion_9),
        (10, Duration::from_secs(1800), criterion_10),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut summary: HashMap<usize, bool> = HashMap::new();
    let mut gate = true;
    for (id, limit, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let v = timed(limit, f);
        println!("{} criterion {id}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        summary.insert(id, v.pass);
        gate &= v.gate_ok;
    }
    let passed = summary.values().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria pass", summary.len());
    if !gate {
        std::process::exit(1);
    }
}
