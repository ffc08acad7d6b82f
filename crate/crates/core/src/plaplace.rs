//! The smooth problem `I(A) = tr S(A)^{p/2}`, `S(A) = -sum_j [A, T_j]^2`,
//! minimized over `0 <= A <= I, AP = P, AQ = 0`, for selfadjoint tuples and
//! `2 <= p < inf`, together with the operator
//! `Theta = sum_k [T_k, Z_k G + G Z_k]`, `Z_k = [X, T_k]`, `G = S^{p/2 - 1}`.
//!
//! `dI(X)[H] = -(p/2) tr(Theta H)`.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::operator::{self, clip_unit, Condenser, ContractionVariable, OperatorTuple};
use crate::solver::{HistoryRow, Method, SolveOptions, SolveReport};

#[derive(Clone, Debug)]
pub struct SmoothProblem {
    tuple: OperatorTuple,
    condenser: Condenser,
    p: f64,
    blocks: Vec<CMat>,
}

impl SmoothProblem {
    pub fn new(tuple: OperatorTuple, condenser: Condenser, p: f64) -> Result<Self> {
        if !tuple.all_selfadjoint() {
            return Err(Error::Validation("the smooth problem needs selfadjoint components".into()));
        }
        if !(p >= 2.0 && p.is_finite()) {
            return Err(Error::Validation(format!("p must satisfy 2 <= p < inf, got {p}")));
        }
        if tuple.dim() != condenser.dim() {
            return Err(Error::Validation(format!(
                "tuple dimension {} does not match condenser dimension {}",
                tuple.dim(),
                condenser.dim()
            )));
        }
        let blocks = tuple.components().iter().map(|t| linalg::hermitian_part(&condenser.to_block(t))).collect();
        Ok(Self { tuple, condenser, p, blocks })
    }

    pub fn tuple(&self) -> &OperatorTuple {
        &self.tuple
    }

    pub fn condenser(&self) -> &Condenser {
        &self.condenser
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn m0(&self) -> usize {
        self.condenser.middle_dim()
    }

    fn diameter(&self) -> f64 {
        (self.m0() as f64).sqrt()
    }

    /// `(I, Theta)` for a matrix `x` given in the basis of `ts`.
    fn value_theta(ts: &[CMat], x: &CMat, p: f64, want_theta: bool) -> Result<(f64, Option<CMat>)> {
        let d = x.nrows();
        let zs: Vec<CMat> = ts.iter().map(|t| linalg::commutator(x, t)).collect();
        let mut s = CMat::zeros(d, d);
        for z in &zs {
            s += z.adjoint() * z;
        }
        let s = linalg::hermitian_part(&s);
        if p == 2.0 {
            let value = s.trace().re.max(0.0);
            let theta = want_theta.then(|| {
                let mut th = CMat::zeros(d, d);
                for (t, z) in ts.iter().zip(&zs) {
                    th += linalg::commutator(t, &(z * c(2.0)));
                }
                linalg::hermitian_part(&th)
            });
            return Ok((value, theta));
        }
        let (vals, vecs) = linalg::hermitian_eigen(&s)?;
        let clipped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
        let value = clipped.iter().map(|&v| v.powf(0.5 * p)).sum();
        let theta = if want_theta {
            let g = linalg::reassemble(&clipped.iter().map(|&v| v.powf(0.5 * p - 1.0)).collect::<Vec<_>>(), &vecs);
            let mut th = CMat::zeros(d, d);
            for (t, z) in ts.iter().zip(&zs) {
                th += linalg::commutator(t, &(z * &g + &g * z));
            }
            Some(linalg::hermitian_part(&th))
        } else {
            None
        };
        Ok((value, theta))
    }

    fn block_of(&self, x: &[f64]) -> CMat {
        self.condenser.embed_block(&linalg::vec_to_herm(x, self.m0()))
    }

    fn value_at(&self, x: &[f64]) -> Result<f64> {
        Ok(Self::value_theta(&self.blocks, &self.block_of(x), self.p, false)?.0)
    }

    /// Value and gradient in the flattened middle-block coordinates.
    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, th) = Self::value_theta(&self.blocks, &self.block_of(x), self.p, true)?;
        let th = th.expect("requested");
        let (rp, m0) = (self.condenser.rank_p(), self.m0());
        let mid = th.view((rp, rp), (m0, m0)).into_owned() * c(-0.5 * self.p);
        Ok((v, linalg::herm_to_vec(&linalg::hermitian_part(&mid))))
    }

    fn project(&self, x: &mut [f64]) -> Result<()> {
        if self.m0() == 0 {
            return Ok(());
        }
        let b = clip_unit(&linalg::vec_to_herm(x, self.m0()))?;
        x.copy_from_slice(&linalg::herm_to_vec(&b));
        Ok(())
    }
}

fn check_feasible(prob: &SmoothProblem, a: &CMat) -> Result<()> {
    let d = prob.condenser.dim();
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::Dimension(format!("expected a {d}x{d} matrix")));
    }
    Ok(())
}

/// `I(A) = tr (-sum_j [A, T_j]^2)^{p/2}`.
pub fn smooth_objective(prob: &SmoothProblem, a: &CMat) -> Result<f64> {
    check_feasible(prob, a)?;
    Ok(SmoothProblem::value_theta(prob.tuple.components(), a, prob.p, false)?.0)
}

/// `Theta(X)` in the original basis.
pub fn theta(prob: &SmoothProblem, x: &CMat) -> Result<CMat> {
    check_feasible(prob, x)?;
    let (_, th) = SmoothProblem::value_theta(prob.tuple.components(), x, prob.p, true)?;
    Ok(th.expect("requested"))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Largest curvature along a few power-iteration steps on finite differences
/// of the gradient.
fn curvature_estimate(prob: &SmoothProblem, x: &[f64], g: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
    use rand::Rng;
    let m = x.len();
    let mut v: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
    let h = 1e-6 * prob.diameter().max(1.0);
    let mut est = 0.0;
    for _ in 0..8 {
        let n = norm2(&v);
        if n == 0.0 {
            break;
        }
        v.iter_mut().for_each(|vi| *vi /= n);
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let (_, gp) = prob.value_grad(&xp)?;
        v = gp.iter().zip(g).map(|(a, b)| (a - b) / h).collect();
        est = norm2(&v);
    }
    Ok(est)
}

/// Accepted steps without relative progress before the roundoff floor is
/// declared reached.
const STALL_WINDOW: usize = 100;

struct SmoothRun {
    x: Vec<f64>,
    value: f64,
    history: Vec<HistoryRow>,
    converged: bool,
}

/// Accelerated projected gradient with backtracking (step halving) and
/// adaptive restart, from a feasible start.
fn descend(prob: &SmoothProblem, x0: &[f64], opts: &SolveOptions, seed: u64) -> Result<SmoothRun> {
    let diam = prob.diameter().max(f64::MIN_POSITIVE);
    let mut x = x0.to_vec();
    prob.project(&mut x)?;
    let (mut fx, gx) = prob.value_grad(&x)?;
    let mut history = vec![HistoryRow { iter: 0, objective: fx, step: 0.0 }];
    let (mut best_x, mut best_f) = (x.clone(), fx);
    if fx == 0.0 || norm2(&gx) == 0.0 {
        return Ok(SmoothRun { x, value: fx, history, converged: true });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lip = curvature_estimate(prob, &x, &gx, &mut rng)?.max(norm2(&gx) / diam);
    let (mut y, mut fy, mut gy) = (x.clone(), fx, gx);
    let mut t = 1.0_f64;
    let mut converged = false;
    let (mut anchor, mut since) = (fx, 0usize);
    while history.len() < opts.max_iters {
        let mut accepted = None;
        for _ in 0..60 {
            let mut z: Vec<f64> = y.iter().zip(&gy).map(|(a, b)| a - b / lip).collect();
            prob.project(&mut z)?;
            let fz = prob.value_at(&z)?;
            let d: Vec<f64> = z.iter().zip(&y).map(|(a, b)| a - b).collect();
            if fz <= fy + dot(&gy, &d) + 0.5 * lip * dot(&d, &d) + 1e-13 * fy.abs() {
                accepted = Some((z, fz, d));
                break;
            }
            lip *= 2.0;
        }
        let (z, fz, d) = accepted.ok_or_else(|| Error::Numeric("line search failed".into()))?;
        history.push(HistoryRow { iter: history.len(), objective: fz, step: 1.0 / lip });
        if fz < best_f {
            best_f = fz;
            best_x.copy_from_slice(&z);
        }
        if fz == 0.0 || lip * norm2(&d) * diam <= opts.tol * fz {
            converged = true;
            break;
        }
        since += 1;
        if fz < anchor - 0.1 * opts.tol * anchor {
            anchor = fz;
            since = 0;
        } else if since >= STALL_WINDOW {
            converged = true;
            break;
        }
        if fz > fx {
            t = 1.0;
            y = x.clone();
            let (f, g) = prob.value_grad(&y)?;
            fy = f;
            gy = g;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let mut yn: Vec<f64> = z.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        prob.project(&mut yn)?;
        x = z;
        fx = fz;
        t = t_next;
        let (f, g) = prob.value_grad(&yn)?;
        y = yn;
        fy = f;
        gy = g;
        lip *= 0.9;
    }
    let (x, value) = polish(prob, best_x, best_f, lip)?;
    Ok(SmoothRun { x, value, history, converged })
}

/// Projected gradient steps while the gradient-mapping norm decreases; this
/// resolves the minimizer below the level where objective values still differ.
fn polish(prob: &SmoothProblem, mut x: Vec<f64>, mut fx: f64, mut lip: f64) -> Result<(Vec<f64>, f64)> {
    let step = |x: &[f64], g: &[f64], lip: f64| -> Result<Vec<f64>> {
        let mut z: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b / lip).collect();
        prob.project(&mut z)?;
        Ok(z)
    };
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let (_, mut gx) = prob.value_grad(&x)?;
    let mut z = step(&x, &gx, lip)?;
    let mut r = dist(&z, &x);
    let mut doublings = 0;
    for _ in 0..500 {
        if r == 0.0 {
            break;
        }
        let (fz, gz) = prob.value_grad(&z)?;
        if fz > fx + 1e-13 * fx.abs() {
            if doublings == 60 {
                break;
            }
            doublings += 1;
            lip *= 2.0;
            z = step(&x, &gx, lip)?;
            r = dist(&z, &x);
            continue;
        }
        let zn = step(&z, &gz, lip)?;
        let rn = dist(&zn, &z);
        if rn >= r {
            if fz <= fx {
                return Ok((z, fz));
            }
            break;
        }
        (x, fx, gx, z, r) = (z, fz, gz, zn, rn);
    }
    Ok((x, fx))
}

fn report_from(prob: &SmoothProblem, run: SmoothRun, restart_values: Vec<f64>, start: Instant) -> Result<SolveReport<ContractionVariable>> {
    let var = ContractionVariable::from_clipped(linalg::vec_to_herm(&run.x, prob.m0()));
    let a = prob.condenser.embed(&var);
    let mut flags = Vec::new();
    if !run.converged {
        flags.push("not_converged".to_string());
    }
    Ok(SolveReport {
        value: run.value,
        minimizer: var,
        iters: run.history.len() - 1,
        history: run.history,
        restart_values,
        feasibility_residuals: residuals(&prob.condenser, &a)?,
        converged: run.converged,
        method: Method::SmoothDual,
        wall_time: start.elapsed().as_secs_f64(),
        flags,
    })
}

fn residuals(c: &Condenser, a: &CMat) -> Result<BTreeMap<String, f64>> {
    let mut r = BTreeMap::new();
    r.insert("ap_minus_p".into(), (a * c.p() - c.p()).norm());
    r.insert("aq".into(), (a * c.q()).norm());
    let (vals, _) = linalg::hermitian_eigen(a)?;
    let lo = vals.first().copied().unwrap_or(0.0);
    let hi = vals.last().copied().unwrap_or(0.0);
    r.insert("spectrum".into(), (-lo).max(hi - 1.0).max(0.0));
    Ok(r)
}

/// Minimizes `I` over the feasible set. Start 0 is `B = I/2`, the others are
/// random; the best run is reported.
pub fn minimize_smooth(prob: &SmoothProblem, opts: &SolveOptions) -> Result<SolveReport<ContractionVariable>> {
    let start = Instant::now();
    opts.validate()?;
    if prob.m0() == 0 {
        let var = prob.condenser.zero_variable();
        let run = SmoothRun {
            x: Vec::new(),
            value: prob.value_at(&[])?,
            history: Vec::new(),
            converged: true,
        };
        let mut run = run;
        run.history.push(HistoryRow { iter: 0, objective: run.value, step: 0.0 });
        let mut rep = report_from(prob, run, Vec::new(), start)?;
        rep.restart_values = vec![rep.value];
        rep.flags.push("single_feasible_point".into());
        rep.minimizer = var;
        return Ok(rep);
    }
    let starts: Vec<Vec<f64>> = (0..opts.restarts)
        .map(|i| {
            if i == 0 {
                linalg::herm_to_vec(prob.condenser.scalar_variable(0.5).middle())
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
                linalg::herm_to_vec(&linalg::random_contraction(prob.m0(), &mut rng))
            }
        })
        .collect();
    let runs: Vec<Result<SmoothRun>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| descend(prob, x0, opts, opts.seed.wrapping_add(i as u64)))
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = runs.iter().map(|r| r.value).collect();
    let converged = runs.iter().all(|r| r.converged);
    let mut win = 0;
    for i in 1..values.len() {
        if values[i] < values[win] {
            win = i;
        }
    }
    let mut run = runs.into_iter().nth(win).expect("winner");
    run.converged = converged;
    report_from(prob, run, values, start)
}

/// Tolerances for the sign certificates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElTolerances {
    /// Level-set threshold for extracting `P1`, `Q1`.
    pub eps1: f64,
    /// Relative slack: `delta = delta_rel |Theta|_op + delta_abs`.
    pub delta_rel: f64,
    pub delta_abs: f64,
}

impl Default for ElTolerances {
    fn default() -> Self {
        Self { eps1: 1e-6, delta_rel: 1e-6, delta_abs: 1e-12 }
    }
}

#[derive(Clone, Debug)]
pub struct ThetaReport {
    pub theta: CMat,
    pub p1: CMat,
    pub q1: CMat,
    pub p1_rank: usize,
    pub q1_rank: usize,
    /// Eigenvalues of `Theta` compressed to the ranges of `I - P - Q1`,
    /// `I - P1 - Q`, `I - P1 - Q1`.
    pub compression_eigs: [Vec<f64>; 3],
    pub theta_opnorm: f64,
    pub delta: f64,
    pub eps1: f64,
    /// `max eig` of the first compression is `<= delta`.
    pub upper_condition: bool,
    /// `min eig` of the second compression is `>= -delta`.
    pub lower_condition: bool,
    /// Spectral radius of the third compression is `<= delta`.
    pub null_condition: bool,
    /// First-order optimality with `grad I = -(p/2) Theta`: `Theta >= -delta`
    /// on `P1 - P`, `Theta <= delta` on `Q1 - Q`, zero on the rest.
    pub kkt_condition: bool,
    /// Residuals of `X P1 = P1`, `X Q1 = 0`, `P <= P1`, `Q <= Q1`, `P1 Q1 = 0`.
    pub relation_residuals: BTreeMap<String, f64>,
    pub flags: Vec<String>,
}

impl ThetaReport {
    pub fn passes(&self) -> bool {
        self.upper_condition && self.lower_condition && self.null_condition
    }
}

/// Eigenvalues of `Theta` compressed to the span of the orthonormal `cols`.
fn compressed_eigs(theta: &CMat, cols: &CMat) -> Result<Vec<f64>> {
    if cols.ncols() == 0 {
        return Ok(Vec::new());
    }
    let m = linalg::hermitian_part(&(cols.adjoint() * theta * cols));
    Ok(linalg::hermitian_eigen(&m)?.0)
}

fn hstack(blocks: &[&CMat]) -> CMat {
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        out.view_mut((0, c0), (rows, b.ncols())).copy_from(b);
        c0 += b.ncols();
    }
    out
}

/// Sign certificates at a (putative) minimizer.
pub fn euler_lagrange_report(prob: &SmoothProblem, x: &ContractionVariable, tol: &ElTolerances) -> Result<ThetaReport> {
    let cond = &prob.condenser;
    if x.middle().nrows() != cond.middle_dim() {
        return Err(Error::Dimension("variable does not match the condenser".into()));
    }
    let a = cond.embed(x);
    let th = theta(prob, &a)?;
    let theta_opnorm = linalg::opnorm(&th)?;
    let delta = tol.delta_rel * theta_opnorm + tol.delta_abs;
    let eps1 = tol.eps1;
    let (vals, vecs) = linalg::hermitian_eigen(x.middle())?;
    let mb = cond.middle_basis();
    let mid_vecs = &mb * &vecs;
    let pick = |f: &dyn Fn(f64) -> bool| -> CMat {
        let idx: Vec<usize> = (0..vals.len()).filter(|&k| f(vals[k])).collect();
        CMat::from_fn(mid_vecs.nrows(), idx.len(), |i, k| mid_vecs[(i, idx[k])])
    };
    let top = pick(&|v| v >= 1.0 - eps1);
    let bottom = pick(&|v| v <= eps1);
    let interior = pick(&|v| v > eps1 && v < 1.0 - eps1);
    let basis = cond.block_basis();
    let bp = basis.columns(0, cond.rank_p()).into_owned();
    let bq = basis.columns(cond.rank_p() + cond.middle_dim(), cond.rank_q()).into_owned();
    let p1_cols = hstack(&[&bp, &top]);
    let q1_cols = hstack(&[&bq, &bottom]);
    let p1 = &p1_cols * p1_cols.adjoint();
    let q1 = &q1_cols * q1_cols.adjoint();

    // ranges: I - P - Q1 = top + interior, I - P1 - Q = bottom + interior
    let e1 = compressed_eigs(&th, &hstack(&[&top, &interior]))?;
    let e2 = compressed_eigs(&th, &hstack(&[&bottom, &interior]))?;
    let e3 = compressed_eigs(&th, &interior)?;
    let upper_condition = e1.last().is_none_or(|&v| v <= delta);
    let lower_condition = e2.first().is_none_or(|&v| v >= -delta);
    let null_condition = e3.iter().all(|v| v.abs() <= delta);
    let kkt_top = compressed_eigs(&th, &top)?;
    let kkt_bottom = compressed_eigs(&th, &bottom)?;
    let kkt_condition = kkt_top.first().is_none_or(|&v| v >= -delta)
        && kkt_bottom.last().is_none_or(|&v| v <= delta)
        && null_condition;

    let mut rel = BTreeMap::new();
    rel.insert("x_p1_minus_p1".into(), (&a * &p1 - &p1).norm());
    rel.insert("x_q1".into(), (&a * &q1).norm());
    rel.insert("p_le_p1".into(), (&p1 * cond.p() - cond.p()).norm());
    rel.insert("q_le_q1".into(), (&q1 * cond.q() - cond.q()).norm());
    rel.insert("p1_q1".into(), (&p1 * &q1).norm());
    let mut flags = Vec::new();
    if vals.iter().any(|&v| (v > eps1 && v < 2.0 * eps1) || (v > 1.0 - 2.0 * eps1 && v < 1.0 - eps1)) {
        flags.push("boundary_ambiguous".to_string());
    }
    Ok(ThetaReport {
        p1_rank: p1_cols.ncols(),
        q1_rank: q1_cols.ncols(),
        theta: th,
        p1,
        q1,
        compression_eigs: [e1, e2, e3],
        theta_opnorm,
        delta,
        eps1,
        upper_condition,
        lower_condition,
        null_condition,
        kkt_condition,
        relation_residuals: rel,
        flags,
    })
}

#[derive(Clone, Debug)]
pub struct UniquenessReport {
    pub values: Vec<f64>,
    pub converged: Vec<bool>,
    /// `(a, b, j, |[X_a, T_j] - [X_b, T_j]|_F)` over converged pairs.
    pub commutator_distances: Vec<(usize, usize, usize, f64)>,
    pub max_commutator_distance: f64,
    pub max_minimizer_distance: f64,
    pub excluded: Vec<usize>,
}

/// Minimizes from `trials` independent random starts and compares the
/// commutators of the minimizers with the tuple.
pub fn uniqueness_probe(prob: &SmoothProblem, opts: &SolveOptions, trials: usize) -> Result<UniquenessReport> {
    if trials < 2 {
        return Err(Error::Validation("uniqueness probe needs at least 2 trials".into()));
    }
    opts.validate()?;
    let runs: Vec<Result<(f64, bool, CMat)>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = opts.seed.wrapping_add(1000 + i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = linalg::herm_to_vec(&linalg::random_contraction(prob.m0(), &mut rng));
            let run = if prob.m0() == 0 {
                SmoothRun { x: Vec::new(), value: prob.value_at(&[])?, history: Vec::new(), converged: true }
            } else {
                descend(prob, &x0, opts, seed)?
            };
            let var = ContractionVariable::from_clipped(linalg::vec_to_herm(&run.x, prob.m0()));
            Ok((run.value, run.converged, prob.condenser.embed(&var)))
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let comms: Vec<Vec<CMat>> =
        runs.iter().map(|(_, _, a)| operator::commutators(&prob.tuple, a)).collect::<Result<_>>()?;
    let ok: Vec<usize> = (0..trials).filter(|&i| runs[i].1).collect();
    let mut dists = Vec::new();
    let mut max_c = 0.0_f64;
    let mut max_x = 0.0_f64;
    for (ia, &a) in ok.iter().enumerate() {
        for &b in &ok[ia + 1..] {
            max_x = max_x.max((&runs[a].2 - &runs[b].2).norm());
            for j in 0..prob.tuple.len() {
                let dj = (&comms[a][j] - &comms[b][j]).norm();
                max_c = max_c.max(dj);
                dists.push((a, b, j, dj));
            }
        }
    }
    Ok(UniquenessReport {
        values: runs.iter().map(|r| r.0).collect(),
        converged: runs.iter().map(|r| r.1).collect(),
        commutator_distances: dists,
        max_commutator_distance: max_c,
        max_minimizer_distance: max_x,
        excluded: (0..trials).filter(|&i| !runs[i].1).collect(),
    })
}
