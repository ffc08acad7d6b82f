//! `k_J(tau; P, Q) = inf { max_j |[A, T_j]|_{J_j} : 0 <= A <= I, AP = P, AQ = 0 }`.

use std::collections::BTreeMap;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::engine::{argmax_lowest, minimize, ConvexMaxProblem, Eval, GradMode};
use super::{HistoryRow, SolveOptions, SolveReport};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::norms::{self, NormSpec};
use crate::operator::{
    self, clip_unit, Condenser, ContractionVariable, NormSpecs, OperatorTuple, ProjectionSource,
};

/// The condenser problem in the block basis, with the middle block of `A`
/// flattened isometrically to `R^{m0^2}`.
///
/// Since `A` vanishes on the range of `Q`, every `[A, T_j]` factors through
/// the isometry `diag(I_K, W)`, where `K = rank P + m0` and `W` spans the part
/// of the `Q` block coupled to the first `K` coordinates. The blocks are
/// stored in that compressed form.
pub struct CondenserProblem {
    condenser: Condenser,
    work_dim: usize,
    blocks: Vec<CMat>,
    blocks_adj: Vec<CMat>,
    specs: Vec<NormSpec>,
    power: Option<f64>,
}

impl CondenserProblem {
    pub fn new(tuple: &OperatorTuple, condenser: &Condenser, specs: &NormSpecs) -> Result<Self> {
        if tuple.dim() != condenser.dim() {
            return Err(Error::Validation(format!(
                "tuple dimension {} does not match condenser dimension {}",
                tuple.dim(),
                condenser.dim()
            )));
        }
        specs.validate(tuple.len())?;
        let blocks: Vec<CMat> = tuple.components().iter().map(|t| condenser.to_block(t)).collect();
        let blocks = compress_blocks(blocks, condenser.rank_p() + condenser.middle_dim())?;
        let work_dim = blocks.first().map_or(condenser.dim(), |b| b.nrows());
        let blocks_adj = blocks.iter().map(|b| b.adjoint()).collect();
        let power = specs.common_schatten_p(tuple.len()).filter(|&p| p > 1.0);
        Ok(Self {
            condenser: condenser.clone(),
            work_dim,
            blocks,
            blocks_adj,
            specs: (0..tuple.len()).map(|j| specs.for_component(j).clone()).collect(),
            power,
        })
    }

    pub fn condenser(&self) -> &Condenser {
        &self.condenser
    }

    /// Size of the matrices the objective is evaluated on.
    pub fn work_dim(&self) -> usize {
        self.work_dim
    }

    fn embed(&self, middle: &CMat) -> CMat {
        let rp = self.condenser.rank_p();
        let m0 = self.m0();
        let mut a = CMat::zeros(self.work_dim, self.work_dim);
        for i in 0..rp {
            a[(i, i)] = linalg::c(1.0);
        }
        a.view_mut((rp, rp), (m0, m0)).copy_from(middle);
        a
    }

    fn m0(&self) -> usize {
        self.condenser.middle_dim()
    }

    pub fn to_variable(&self, x: &[f64]) -> ContractionVariable {
        ContractionVariable::from_clipped(linalg::vec_to_herm(x, self.m0()))
    }

    pub fn from_variable(&self, v: &ContractionVariable) -> Vec<f64> {
        linalg::herm_to_vec(v.middle())
    }
}

impl ConvexMaxProblem for CondenserProblem {
    fn dim(&self) -> usize {
        linalg::herm_param_len(self.m0())
    }

    fn n_components(&self) -> usize {
        self.blocks.len()
    }

    fn evaluate(&self, x: &[f64], mode: GradMode) -> Result<Eval> {
        let m0 = self.m0();
        let rp = self.condenser.rank_p();
        let a = self.embed(&linalg::vec_to_herm(x, m0));
        let comms: Vec<CMat> = self.blocks.iter().map(|t| linalg::commutator(&a, t)).collect();
        let n = comms.len();
        let mut values = vec![0.0; n];
        let mut subgrads: Vec<Option<CMat>> = vec![None; n];
        match mode {
            GradMode::None => {
                for (j, z) in comms.iter().enumerate() {
                    values[j] = norms::matrix_norm(z, &self.specs[j])?;
                }
            }
            _ => {
                for (j, z) in comms.iter().enumerate() {
                    let (g, v) = norms::norm_and_subgradient(z, &self.specs[j])?;
                    values[j] = v;
                    subgrads[j] = Some(g);
                }
            }
        }
        let active = argmax_lowest(&values);
        let grads = subgrads
            .into_iter()
            .enumerate()
            .map(|(j, g)| {
                let g = g?;
                if mode == GradMode::Active && j != active {
                    return None;
                }
                // d/dA |[A, T]| = herm(G T* - T* G)
                let full = &g * &self.blocks_adj[j] - &self.blocks_adj[j] * &g;
                let mid = full.view((rp, rp), (m0, m0)).into_owned();
                Some(linalg::herm_to_vec(&linalg::hermitian_part(&mid)))
            })
            .collect();
        Ok(Eval { values, grads })
    }

    fn project(&self, x: &mut [f64]) -> Result<()> {
        let m0 = self.m0();
        if m0 == 0 {
            return Ok(());
        }
        let b = clip_unit(&linalg::vec_to_herm(x, m0))?;
        x.copy_from_slice(&linalg::herm_to_vec(&b));
        Ok(())
    }

    fn diameter(&self) -> f64 {
        (self.m0() as f64).sqrt()
    }

    fn smooth_power(&self) -> Option<f64> {
        self.power
    }

    fn center(&self) -> Vec<f64> {
        linalg::herm_to_vec(self.condenser.scalar_variable(0.5).middle())
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        linalg::herm_to_vec(&linalg::random_contraction(self.m0(), rng))
    }
}

/// Replaces each block `T` by `V* T V`, `V = diag(I_k, W)`, where `W` is an
/// orthonormal basis of the ranges of `T_{RS}` and `T_{SR}^*` over all blocks
/// (`S` the first `k` coordinates, `R` the rest). Unchanged when that does not
/// shrink the dimension.
fn compress_blocks(blocks: Vec<CMat>, k: usize) -> Result<Vec<CMat>> {
    let Some(first) = blocks.first() else {
        return Ok(blocks);
    };
    let d = first.nrows();
    let rest = d - k;
    if rest == 0 || k == 0 {
        return Ok(blocks);
    }
    let mut cols = CMat::zeros(rest, 2 * k * blocks.len());
    for (j, t) in blocks.iter().enumerate() {
        cols.view_mut((0, 2 * k * j), (rest, k)).copy_from(&t.view((k, 0), (rest, k)));
        cols.view_mut((0, 2 * k * j + k), (rest, k)).copy_from(&t.view((0, k), (k, rest)).adjoint());
    }
    let svd = linalg::svd(&cols)?;
    let top = svd.s.first().copied().unwrap_or(0.0);
    let r = svd.s.iter().filter(|&&s| s > COMPRESS_RTOL * top).count();
    if k + r >= d {
        return Ok(blocks);
    }
    let mut v = CMat::zeros(d, k + r);
    for i in 0..k {
        v[(i, i)] = linalg::c(1.0);
    }
    v.view_mut((k, k), (rest, r)).copy_from(&svd.u.columns(0, r));
    let v_adj = v.adjoint();
    Ok(blocks.iter().map(|t| &v_adj * t * &v).collect())
}

/// Relative singular-value cutoff for the coupling rank in [`compress_blocks`].
const COMPRESS_RTOL: f64 = 1e-14;

/// Residuals of `AP = P`, `AQ = 0`, `A = A*` and `0 <= A <= I`.
pub(crate) fn condenser_residuals(c: &Condenser, a: &CMat) -> Result<BTreeMap<String, f64>> {
    let mut r = BTreeMap::new();
    r.insert("ap_minus_p".into(), (a * c.p() - c.p()).norm());
    r.insert("aq".into(), (a * c.q()).norm());
    r.insert("selfadjoint".into(), (a - a.adjoint()).norm());
    let (vals, _) = linalg::hermitian_eigen(a)?;
    let lo = vals.first().copied().unwrap_or(0.0);
    let hi = vals.last().copied().unwrap_or(0.0);
    r.insert("spectrum".into(), (-lo).max(hi - 1.0).max(0.0));
    Ok(r)
}

pub fn solve_condenser(
    tuple: &OperatorTuple,
    condenser: &Condenser,
    specs: &NormSpecs,
    opts: &SolveOptions,
) -> Result<SolveReport<ContractionVariable>> {
    solve_condenser_from(tuple, condenser, specs, opts, None)
}

/// As [`solve_condenser`], with an optional feasible warm start used as the
/// first starting point.
pub fn solve_condenser_from(
    tuple: &OperatorTuple,
    condenser: &Condenser,
    specs: &NormSpecs,
    opts: &SolveOptions,
    warm: Option<&ContractionVariable>,
) -> Result<SolveReport<ContractionVariable>> {
    let start = Instant::now();
    opts.validate()?;
    let prob = CondenserProblem::new(tuple, condenser, specs)?;
    let mut flags = Vec::new();
    let shortcut = if condenser.middle_dim() == 0 {
        flags.push("single_feasible_point".to_string());
        Some(condenser.zero_variable())
    } else if condenser.rank_p() == 0 {
        flags.push("empty_inner_plate".to_string());
        Some(condenser.zero_variable())
    } else {
        None
    };
    if let Some(var) = shortcut {
        let a = condenser.embed(&var);
        let value = operator::objective(tuple, &a, specs)?;
        return Ok(SolveReport {
            value,
            history: vec![HistoryRow { iter: 0, objective: value, step: 0.0 }],
            restart_values: vec![value],
            feasibility_residuals: condenser_residuals(condenser, &a)?,
            converged: true,
            iters: 0,
            method: opts.method,
            wall_time: start.elapsed().as_secs_f64(),
            flags,
            minimizer: var,
        });
    }
    if let Some(w) = warm {
        if w.middle().nrows() != condenser.middle_dim() {
            return Err(Error::Dimension("warm start has the wrong middle dimension".into()));
        }
    }
    let warm_x = warm.map(|w| prob.from_variable(w));
    let res = minimize(&prob, opts, warm_x.as_deref())?;
    let var = prob.to_variable(&res.x);
    let a = condenser.embed(&var);
    if !res.converged {
        flags.push("not_converged".to_string());
    }
    Ok(SolveReport {
        value: res.value,
        feasibility_residuals: condenser_residuals(condenser, &a)?,
        minimizer: var,
        history: res.history,
        restart_values: res.restart_values,
        converged: res.converged,
        iters: res.iters,
        method: res.method,
        wall_time: start.elapsed().as_secs_f64(),
        flags,
    })
}

#[derive(Clone, Debug)]
pub struct ScanEntry {
    pub index: usize,
    pub rank_p: usize,
    pub report: SolveReport<ContractionVariable>,
}

/// Scan of `k_J(tau; P, Q)` over a family of inner plates.
#[derive(Clone, Debug)]
pub struct SupReport {
    pub entries: Vec<ScanEntry>,
    pub sup: f64,
    pub running_sup: Vec<f64>,
    /// Pairs `(a, b)` with `P_a <= P_b` but `value_a > value_b + 2 tol scale`.
    pub monotonicity_violations: Vec<(usize, usize)>,
    pub all_converged: bool,
}

fn projection_matrix(dim: usize, src: &ProjectionSource) -> Result<CMat> {
    Ok(match src {
        ProjectionSource::Matrix(m) => m.clone(),
        ProjectionSource::Indices(idx) => operator::coordinate_projection(dim, idx, "P")?,
    })
}

pub fn sup_over_projections(
    tuple: &OperatorTuple,
    p_family: &[ProjectionSource],
    q: &ProjectionSource,
    specs: &NormSpecs,
    opts: &SolveOptions,
) -> Result<SupReport> {
    let d = tuple.dim();
    let conds = p_family
        .iter()
        .map(|p| operator::make_condenser(d, p, q))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<Result<SolveReport<ContractionVariable>>> =
        conds.par_iter().map(|c| solve_condenser(tuple, c, specs, opts)).collect();
    let mut entries = Vec::with_capacity(reports.len());
    for (index, (r, c)) in reports.into_iter().zip(&conds).enumerate() {
        entries.push(ScanEntry { index, rank_p: c.rank_p(), report: r? });
    }
    let mut running = Vec::with_capacity(entries.len());
    let mut sup = 0.0_f64;
    for e in &entries {
        sup = sup.max(e.report.value);
        running.push(sup);
    }
    let mats = p_family.iter().map(|p| projection_matrix(d, p)).collect::<Result<Vec<_>>>()?;
    let mut violations = Vec::new();
    for a in 0..entries.len() {
        for b in 0..entries.len() {
            if a == b {
                continue;
            }
            let contained = (&mats[a] * &mats[b] - &mats[a]).norm() <= operator::PROJECTION_TOL * d as f64;
            let (va, vb) = (entries[a].report.value, entries[b].report.value);
            let slack = 2.0 * opts.tol * va.max(vb).max(1.0);
            if contained && va > vb + slack {
                violations.push((a, b));
            }
        }
    }
    Ok(SupReport {
        all_converged: entries.iter().all(|e| e.report.converged),
        entries,
        sup,
        running_sup: running,
        monotonicity_violations: violations,
    })
}
