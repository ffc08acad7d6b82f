//! Minimization of `F(x) = max_j f_j(x)` over a convex set `C` in `R^m`,
//! where each `f_j` is convex and nonnegative.
//!
//! Two schemes:
//! * projected subgradient with normalized steps `a / sqrt(k + 1)` run in
//!   epochs, each restarting from the best point found so far;
//! * for `f_j = |L_j x|_p` with a common `p > 1`, the smooth powers
//!   `h_j = f_j^p` are minimized by accelerated projected gradient for fixed
//!   simplex weights, and the weights are updated by cutting planes on the
//!   concave dual function.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{HistoryRow, Method, SolveOptions, StepRule};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradMode {
    None,
    /// Gradient of the lowest-index maximizing component only.
    Active,
    All,
}

/// Component values and (sub)gradients at a point.
#[derive(Clone, Debug)]
pub struct Eval {
    pub values: Vec<f64>,
    pub grads: Vec<Option<Vec<f64>>>,
}

impl Eval {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn active(&self) -> usize {
        argmax_lowest(&self.values)
    }
}

pub(crate) fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..v.len() {
        if v[j] > v[best] {
            best = j;
        }
    }
    best
}

pub trait ConvexMaxProblem: Sync {
    fn dim(&self) -> usize;
    fn n_components(&self) -> usize;
    fn evaluate(&self, x: &[f64], mode: GradMode) -> Result<Eval>;
    /// Euclidean projection onto the feasible set, in place.
    fn project(&self, x: &mut [f64]) -> Result<()>;
    /// Euclidean diameter of the feasible set.
    fn diameter(&self) -> f64;
    /// `Some(p)` when every `f_j` is a Schatten `p` norm of a linear image of
    /// `x` with the same `p > 1`.
    fn smooth_power(&self) -> Option<f64>;
    fn center(&self) -> Vec<f64>;
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

/// Result of [`minimize`].
#[derive(Clone, Debug)]
pub struct Minimized {
    pub value: f64,
    pub x: Vec<f64>,
    pub history: Vec<HistoryRow>,
    pub restart_values: Vec<f64>,
    pub converged: bool,
    pub iters: usize,
    pub method: Method,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Records every evaluated feasible point and keeps the best one.
struct Tracker {
    history: Vec<HistoryRow>,
    best_f: f64,
    best_x: Vec<f64>,
    budget: usize,
}

impl Tracker {
    fn new(budget: usize, x0: &[f64]) -> Self {
        Self { history: Vec::new(), best_f: f64::INFINITY, best_x: x0.to_vec(), budget }
    }

    fn record(&mut self, f: f64, step: f64, x: &[f64]) -> bool {
        self.history.push(HistoryRow { iter: self.history.len(), objective: f, step });
        if f < self.best_f {
            self.best_f = f;
            self.best_x.copy_from_slice(x);
            true
        } else {
            false
        }
    }

    fn exhausted(&self) -> bool {
        self.history.len() >= self.budget
    }
}

struct Run {
    tracker: Tracker,
    converged: bool,
}

fn resolve_method<P: ConvexMaxProblem + ?Sized>(prob: &P, opts: &SolveOptions) -> Result<Method> {
    match opts.method {
        Method::Auto => Ok(if prob.smooth_power().is_some() && opts.step_rule == StepRule::Diminishing {
            Method::SmoothDual
        } else {
            Method::Subgradient
        }),
        Method::SmoothDual if prob.smooth_power().is_none() => Err(Error::Validation(
            "smooth_dual requires every component to use the same Schatten p > 1".into(),
        )),
        m => Ok(m),
    }
}

/// Minimizes from `opts.restarts` starting points in parallel. Start 0 is
/// `warm` if given, else the center; the others are random with seeds
/// derived from `opts.seed`. Results are merged by start index.
pub fn minimize<P: ConvexMaxProblem + ?Sized>(prob: &P, opts: &SolveOptions, warm: Option<&[f64]>) -> Result<Minimized> {
    opts.validate()?;
    let method = resolve_method(prob, opts)?;
    let starts: Vec<Vec<f64>> = (0..opts.restarts)
        .map(|i| {
            let mut x = match (i, warm) {
                (0, Some(w)) => w.to_vec(),
                (0, None) => prob.center(),
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
                    prob.random_point(&mut rng)
                }
            };
            prob.project(&mut x).map(|_| x)
        })
        .collect::<Result<_>>()?;
    if starts.iter().any(|x| x.len() != prob.dim()) {
        return Err(Error::Dimension("starting point has the wrong length".into()));
    }
    let runs: Vec<Result<Run>> = starts
        .par_iter()
        .map(|x0| match method {
            Method::SmoothDual => run_smooth(prob, x0, opts, prob.smooth_power().expect("checked")),
            _ => run_subgradient(prob, x0, opts),
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let restart_values: Vec<f64> = runs.iter().map(|r| r.tracker.best_f).collect();
    let winner = argmin_lowest(&restart_values);
    let converged = runs.iter().all(|r| r.converged);
    let Run { tracker, .. } = runs.into_iter().nth(winner).expect("winner index");
    Ok(Minimized {
        value: tracker.best_f,
        iters: tracker.history.len(),
        x: tracker.best_x,
        history: tracker.history,
        restart_values,
        converged,
        method,
    })
}

fn argmin_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..v.len() {
        if v[j] < v[best] {
            best = j;
        }
    }
    best
}

fn run_subgradient<P: ConvexMaxProblem + ?Sized>(prob: &P, x0: &[f64], opts: &SolveOptions) -> Result<Run> {
    let diam = prob.diameter();
    let mut tracker = Tracker::new(opts.max_iters, x0);
    let mut x = x0.to_vec();
    let mut a = 0.5 * diam;
    let len = opts.epoch_len;
    let mut stalls = 0;
    let mut converged = false;
    'epochs: loop {
        let start_best = tracker.best_f;
        let mut last_gain = 0;
        let mut gmax = 0.0_f64;
        for k in 0..len {
            if tracker.exhausted() {
                break 'epochs;
            }
            let ev = prob.evaluate(&x, GradMode::Active)?;
            let f = ev.max();
            if !f.is_finite() {
                return Err(Error::Numeric("objective is not finite".into()));
            }
            let g = ev.grads[ev.active()].as_ref().ok_or_else(|| Error::Numeric("missing gradient".into()))?;
            let gn = norm2(g);
            gmax = gmax.max(gn);
            let step = match (opts.step_rule, opts.target) {
                (StepRule::PolyakWithEstimate, Some(t)) if f > t && gn > 0.0 => ((f - t) / gn).min(diam),
                _ => a / ((k + 1) as f64).sqrt(),
            };
            if tracker.record(f, step, &x) {
                last_gain = k;
            }
            if gn == 0.0 || f == 0.0 || diam == 0.0 {
                converged = true;
                break 'epochs;
            }
            for (xi, gi) in x.iter_mut().zip(g) {
                *xi -= step * gi / gn;
            }
            prob.project(&mut x)?;
        }
        let gain = (start_best - tracker.best_f) / tracker.best_f.abs().max(f64::MIN_POSITIVE);
        if start_best.is_finite() && gain <= opts.tol {
            stalls += 1;
        } else {
            stalls = 0;
        }
        // with steps of length `a` the attainable accuracy is about `a |g|`
        let fine = opts.step_rule == StepRule::PolyakWithEstimate || a * gmax <= opts.tol * tracker.best_f;
        if stalls >= 2 && fine {
            converged = true;
            break;
        }
        if 4 * last_gain < 3 * len {
            a *= 0.5;
        }
        if a < 1e-15 * diam {
            converged = true;
            break;
        }
        x.copy_from_slice(&tracker.best_x);
    }
    Ok(Run { tracker, converged })
}

/// `sum_j w_j f_j^p` and its gradient.
const STALL_WINDOW: usize = 100;

fn weighted_power(ev: &Eval, w: &[f64], p: f64, dim: usize) -> (f64, Vec<f64>) {
    let mut val = 0.0;
    let mut grad = vec![0.0; dim];
    for (j, (&f, &wj)) in ev.values.iter().zip(w).enumerate() {
        if wj == 0.0 || f == 0.0 {
            continue;
        }
        val += wj * f.powf(p);
        let c = wj * p * f.powf(p - 1.0);
        if let Some(g) = &ev.grads[j] {
            for (gi, x) in grad.iter_mut().zip(g) {
                *gi += c * x;
            }
        }
    }
    (val, grad)
}

/// Accelerated projected gradient with backtracking and adaptive restart on
/// `psi(x) = sum_j w_j f_j(x)^p`. Returns the last iterate and whether the
/// gradient-mapping test was met.
fn fista<P: ConvexMaxProblem + ?Sized>(
    prob: &P,
    x0: &[f64],
    w: &[f64],
    p: f64,
    tol: f64,
    tracker: &mut Tracker,
) -> Result<(Vec<f64>, bool)> {
    let m = prob.dim();
    let diam = prob.diameter().max(f64::MIN_POSITIVE);
    let eval = |x: &[f64]| -> Result<(Eval, f64, Vec<f64>)> {
        let ev = prob.evaluate(x, GradMode::All)?;
        let (psi, g) = weighted_power(&ev, w, p, m);
        if !psi.is_finite() {
            return Err(Error::Numeric("objective is not finite".into()));
        }
        Ok((ev, psi, g))
    };
    let mut x = x0.to_vec();
    let (ev0, mut psi_x, g0) = eval(&x)?;
    tracker.record(ev0.max(), 0.0, &x);
    if psi_x == 0.0 || m == 0 {
        return Ok((x, true));
    }
    // curvature estimate from a short probe along the negative gradient
    let gn0 = norm2(&g0);
    if gn0 == 0.0 {
        return Ok((x, true));
    }
    let mut lip = {
        let h = 1e-4 * diam;
        let probe: Vec<f64> = x.iter().zip(&g0).map(|(xi, gi)| xi - h * gi / gn0).collect();
        let (_, _, g1) = eval(&probe)?;
        (dist(&g1, &g0) / h).max(gn0 / diam)
    };
    let mut y = x.clone();
    let (mut psi_y, mut g_y) = (psi_x, g0);
    let mut t = 1.0_f64;
    let (mut anchor, mut since) = (psi_x, 0usize);
    loop {
        if tracker.exhausted() {
            return Ok((x, false));
        }
        let mut accepted = None;
        for _ in 0..60 {
            let mut z: Vec<f64> = y.iter().zip(&g_y).map(|(yi, gi)| yi - gi / lip).collect();
            prob.project(&mut z)?;
            let (ev_z, psi_z, g_z) = eval(&z)?;
            let d: Vec<f64> = z.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = psi_y + dot(&g_y, &d) + 0.5 * lip * dot(&d, &d);
            if psi_z <= model + 1e-12 * psi_y.abs() {
                accepted = Some((z, ev_z, psi_z, g_z, d));
                break;
            }
            lip *= 2.0;
        }
        let (z, ev_z, psi_z, g_z, d) =
            accepted.ok_or_else(|| Error::Numeric("line search failed to find a descent step".into()))?;
        tracker.record(ev_z.max(), 1.0 / lip, &z);
        let gmap = lip * norm2(&d);
        if gmap * diam <= tol * psi_z.max(f64::MIN_POSITIVE) || psi_z == 0.0 {
            return Ok((z, true));
        }
        // stagnation at the roundoff floor
        since += 1;
        if psi_z < anchor - tol * anchor {
            anchor = psi_z;
            since = 0;
        } else if since >= STALL_WINDOW {
            let best = if psi_z <= psi_x { z } else { x };
            return Ok((best, true));
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if psi_z > psi_x {
            // adaptive restart
            t = 1.0;
            y = x.clone();
            let (_, py, gy) = eval(&y)?;
            psi_y = py;
            g_y = gy;
            lip *= 0.9;
            continue;
        }
        let beta = (t - 1.0) / t_next;
        let mut y_next: Vec<f64> = z.iter().zip(&x).map(|(zi, xi)| zi + beta * (zi - xi)).collect();
        prob.project(&mut y_next)?;
        x = z;
        psi_x = psi_z;
        t = t_next;
        if beta == 0.0 {
            y = x.clone();
            psi_y = psi_z;
            g_y = g_z;
        } else {
            let (_, py, gy) = eval(&y_next)?;
            y = y_next;
            psi_y = py;
            g_y = gy;
        }
        lip *= 0.95;
    }
}

fn run_smooth<P: ConvexMaxProblem + ?Sized>(prob: &P, x0: &[f64], opts: &SolveOptions, p: f64) -> Result<Run> {
    let n = prob.n_components();
    let mut tracker = Tracker::new(opts.max_iters, x0);
    let inner_tol = 0.1 * opts.tol;
    if n == 1 {
        let (_, ok) = fista(prob, x0, &[1.0], p, inner_tol, &mut tracker)?;
        return Ok(Run { tracker, converged: ok });
    }
    let mut lambda = vec![1.0 / n as f64; n];
    let mut x = x0.to_vec();
    let mut cuts: Vec<Vec<f64>> = Vec::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut lower = 0.0_f64;
    let mut converged = false;
    // rounds in which new cuts left both bounds unchanged
    let (mut model, mut stalled) = ((f64::NAN, f64::NAN), 0);
    for _ in 0..200 {
        if tracker.exhausted() {
            break;
        }
        let (xk, _) = fista(prob, &x, &lambda, p, inner_tol, &mut tracker)?;
        let ev = prob.evaluate(&xk, GradMode::None)?;
        let v: Vec<f64> = ev.values.iter().map(|f| f.powf(p)).collect();
        lower = lower.max(dot(&lambda, &v));
        cuts.push(v);
        points.push(xk.clone());
        let (next_lambda, upper, mu) = kelley_step(&cuts)?;
        let mut xbar = vec![0.0; x.len()];
        for (mk, pk) in mu.iter().zip(&points) {
            for (xb, xi) in xbar.iter_mut().zip(pk) {
                *xb += mk * xi;
            }
        }
        prob.project(&mut xbar)?;
        let fbar = prob.evaluate(&xbar, GradMode::None)?.max();
        tracker.record(fbar, 0.0, &xbar);
        // gap on the scale of max_j f_j rather than its p-th power
        let gap = upper.powf(1.0 / p) - lower.powf(1.0 / p);
        if gap <= opts.tol * upper.powf(1.0 / p) || upper == 0.0 {
            converged = true;
            break;
        }
        if (upper, lower) == model {
            stalled += 1;
            if stalled >= 3 {
                converged = gap <= 10.0 * opts.tol * upper.powf(1.0 / p);
                break;
            }
        } else {
            stalled = 0;
        }
        model = (upper, lower);
        x = xk;
        lambda = next_lambda;
    }
    Ok(Run { tracker, converged })
}

/// One cutting-plane step for `max_{lambda in simplex} min_k <lambda, v_k>`.
/// Returns the maximizing weights, the model value, and the weights `mu` on
/// the cuts solving the dual `min_mu max_j sum_k mu_k v_kj`.
fn kelley_step(cuts: &[Vec<f64>]) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let n = cuts[0].len();
    let scale = cuts.iter().flatten().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        let mut mu = vec![0.0; cuts.len()];
        mu[cuts.len() - 1] = 1.0;
        return Ok((vec![1.0 / n as f64; n], 0.0, mu));
    }
    let lp_err = |e: minilp::Error| Error::Numeric(format!("cutting-plane LP: {e}"));

    let mut primal = Problem::new(OptimizationDirection::Maximize);
    let s = primal.add_var(1.0, (0.0, 2.0));
    let lam: Vec<_> = (0..n).map(|_| primal.add_var(0.0, (0.0, 1.0))).collect();
    primal.add_constraint(lam.iter().map(|&l| (l, 1.0)), ComparisonOp::Eq, 1.0);
    for v in cuts {
        let mut expr: Vec<_> = lam.iter().zip(v).map(|(&l, &vj)| (l, -vj / scale)).collect();
        expr.push((s, 1.0));
        primal.add_constraint(expr, ComparisonOp::Le, 0.0);
    }
    let sol = primal.solve().map_err(lp_err)?;
    let lambda: Vec<f64> = lam.iter().map(|&l| sol[l].max(0.0)).collect();
    let total: f64 = lambda.iter().sum();
    let lambda: Vec<f64> = lambda.iter().map(|l| l / total).collect();

    let mut dual = Problem::new(OptimizationDirection::Minimize);
    let t = dual.add_var(1.0, (0.0, 2.0));
    let mu: Vec<_> = (0..cuts.len()).map(|_| dual.add_var(0.0, (0.0, 1.0))).collect();
    dual.add_constraint(mu.iter().map(|&m| (m, 1.0)), ComparisonOp::Eq, 1.0);
    for j in 0..n {
        let mut expr: Vec<_> = mu.iter().zip(cuts).map(|(&m, v)| (m, v[j] / scale)).collect();
        expr.push((t, -1.0));
        dual.add_constraint(expr, ComparisonOp::Le, 0.0);
    }
    let dsol = dual.solve().map_err(lp_err)?;
    let weights: Vec<f64> = mu.iter().map(|&m| dsol[m].max(0.0)).collect();
    let wt: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|m| m / wt).collect();
    // model value from the recovered combination, which is exact for it
    let upper = (0..n)
        .map(|j| weights.iter().zip(cuts).map(|(m, v)| m * v[j]).sum::<f64>())
        .fold(0.0, f64::max);
    Ok((lambda, upper, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// `max_j |x - c_j|_2` over the box `[0, 1]^m`.
    struct Balls {
        centers: Vec<Vec<f64>>,
        power: Option<f64>,
    }

    impl ConvexMaxProblem for Balls {
        fn dim(&self) -> usize {
            self.centers[0].len()
        }
        fn n_components(&self) -> usize {
            self.centers.len()
        }
        fn evaluate(&self, x: &[f64], mode: GradMode) -> Result<Eval> {
            let values: Vec<f64> = self.centers.iter().map(|c| dist(x, c)).collect();
            let act = argmax_lowest(&values);
            let grads = self
                .centers
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let want = mode == GradMode::All || (mode == GradMode::Active && j == act);
                    want.then(|| {
                        let d = values[j];
                        x.iter().zip(c).map(|(a, b)| if d > 0.0 { (a - b) / d } else { 0.0 }).collect()
                    })
                })
                .collect();
            Ok(Eval { values, grads })
        }
        fn project(&self, x: &mut [f64]) -> Result<()> {
            x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            Ok(())
        }
        fn diameter(&self) -> f64 {
            (self.dim() as f64).sqrt()
        }
        fn smooth_power(&self) -> Option<f64> {
            self.power
        }
        fn center(&self) -> Vec<f64> {
            vec![0.5; self.dim()]
        }
        fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
            (0..self.dim()).map(|_| rng.random::<f64>()).collect()
        }
    }

    fn two_points(power: Option<f64>) -> Balls {
        Balls { centers: vec![vec![0.0, 0.0], vec![1.0, 0.0]], power }
    }

    #[test]
    fn subgradient_finds_midpoint() {
        let r = minimize(&two_points(None), &SolveOptions::default(), None).unwrap();
        assert!((r.value - 0.5).abs() < 1e-6, "{}", r.value);
        assert_eq!(r.method, Method::Subgradient);
        let hmin = r.history.iter().map(|h| h.objective).fold(f64::INFINITY, f64::min);
        assert_eq!(hmin, r.value);
    }

    #[test]
    fn smooth_dual_finds_midpoint() {
        let r = minimize(&two_points(Some(2.0)), &SolveOptions::default(), None).unwrap();
        assert_eq!(r.method, Method::SmoothDual);
        assert!((r.value - 0.5).abs() < 1e-7, "{}", r.value);
        assert!(r.converged);
        assert!(r.restart_values.iter().all(|v| (v - 0.5).abs() < 1e-7));
    }

    #[test]
    fn three_centers_equalize() {
        let b = Balls { centers: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], power: Some(2.0) };
        let expect = 0.5_f64.sqrt();
        let r = minimize(&b, &SolveOptions::default(), None).unwrap();
        assert!((r.value - expect).abs() < 1e-7, "{}", r.value);
        let r = minimize(&Balls { power: None, ..b }, &SolveOptions::default(), None).unwrap();
        assert!((r.value - expect).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn warm_start_bounds_value() {
        let b = two_points(None);
        let opts = SolveOptions::default().with_max_iters(1).with_restarts(1);
        let r = minimize(&b, &opts, Some(&[0.5, 0.0])).unwrap();
        assert_eq!(r.value, 0.5);
    }

    #[test]
    fn polyak_rule_with_exact_target() {
        let opts = SolveOptions { step_rule: StepRule::PolyakWithEstimate, target: Some(0.5), ..Default::default() };
        let sharp = Balls { centers: vec![vec![0.0], vec![1.0]], power: None };
        let r = minimize(&sharp, &opts, None).unwrap();
        assert!((r.value - 0.5).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn smooth_dual_rejected_without_power() {
        let opts = SolveOptions::default().with_method(Method::SmoothDual);
        assert!(minimize(&two_points(None), &opts, None).is_err());
    }

    #[test]
    fn kelley_step_two_cuts() {
        let (lambda, upper, mu) = kelley_step(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((upper - 0.5).abs() < 1e-12);
        assert!((lambda[0] - 0.5).abs() < 1e-12);
        assert!((mu[0] - 0.5).abs() < 1e-12);
    }
}
