//! Exploratory pipelines on finite surrogates of multiplication tuples.
//!
//! A surrogate at scale `N` is a diagonal tuple on a point set together with a
//! low-pass plate `P` and a high-pass plate `Q` in a "frequency" basis. The
//! band-limit `AQ = 0` stands in for finite rank. Estimates and ratio columns
//! are diagnostics only.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::norms::NormSpec;
use crate::operator::{make_condenser, Condenser, NormSpecs, OperatorTuple, ProjectionSource};
use crate::solver::{scale_sweep, Extrapolation, SolveOptions, SweepReport};

/// Rank of a plate as a function of the number of points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RankRule {
    Fixed { value: usize },
    /// `round(value * N)`.
    Fraction { value: f64 },
    /// `round(coef * N^exponent)`.
    Power { coef: f64, exponent: f64 },
}

impl RankRule {
    pub fn rank(&self, n: usize) -> usize {
        match *self {
            RankRule::Fixed { value } => value,
            RankRule::Fraction { value } => (value * n as f64).round().max(0.0) as usize,
            RankRule::Power { coef, exponent } => (coef * (n as f64).powf(exponent)).round().max(0.0) as usize,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RankRule::Fixed { .. } => true,
            RankRule::Fraction { value } => (0.0..=1.0).contains(&value),
            RankRule::Power { coef, exponent } => coef >= 0.0 && coef.is_finite() && exponent.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid rank rule {self:?}")))
        }
    }
}

/// Integer frequencies `0, 1, -1, 2, -2, ...` (length `n`).
pub fn fourier_order(n: usize) -> Vec<i64> {
    let mut out = Vec::with_capacity(n);
    out.push(0);
    let mut k = 1i64;
    while out.len() < n {
        out.push(k);
        if out.len() < n {
            out.push(-k);
        }
        k += 1;
    }
    out.truncate(n);
    out
}

/// Unitary DFT matrix whose columns are the modes in [`fourier_order`].
pub fn fourier_matrix(n: usize) -> CMat {
    let order = fourier_order(n);
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |j, k| {
        let phase = 2.0 * PI * (order[k] * j as i64).rem_euclid(n as i64) as f64 / n as f64;
        C64::from_polar(scale, phase)
    })
}

/// Position operator `X_N = diag(j/N)` on the cyclic grid with `P` = the `m`
/// lowest Fourier modes and `Q` = modes from rank `k` on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeFreqModel {
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

impl TimeFreqModel {
    pub fn new(n: usize, m: usize, k: usize) -> Result<Self> {
        if !(m < k && k < n) {
            return Err(Error::Validation(format!("time-frequency ranks need M < K < N, got M={m}, K={k}, N={n}")));
        }
        Ok(Self { n, m, k })
    }

    pub fn position(&self) -> CMat {
        linalg::diag_real(&(0..self.n).map(|j| j as f64 / self.n as f64).collect::<Vec<_>>())
    }

    /// The tuple and condenser written in the Fourier basis, where both
    /// plates are coordinate projections.
    pub fn build(&self) -> Result<(OperatorTuple, Condenser)> {
        let f = fourier_matrix(self.n);
        let x = f.adjoint() * self.position() * &f;
        let tuple = OperatorTuple::selfadjoint(vec![linalg::hermitian_part(&x)])?;
        let cond = make_condenser(
            self.n,
            &ProjectionSource::Indices((0..self.m).collect()),
            &ProjectionSource::Indices((self.k..self.n).collect()),
        )?;
        Ok((tuple, cond))
    }
}

fn default_extrapolation() -> Extrapolation {
    Extrapolation::PowerFit
}

fn default_spec() -> NormSpec {
    NormSpec::schatten(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gamma1Config {
    pub scales: Vec<usize>,
    pub m_rule: RankRule,
    pub k_rule: RankRule,
    #[serde(default = "default_spec")]
    pub spec: NormSpec,
    #[serde(default = "default_extrapolation")]
    pub extrapolation: Extrapolation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gamma1Report {
    pub sweep: SweepReport,
    pub ranks: Vec<(usize, usize, usize)>,
    pub estimate: Option<f64>,
    /// `(1/pi) * integral of m`, which is `1/pi` here.
    pub reference: f64,
    pub ratio: Option<f64>,
    /// Values are nondecreasing along the schedule (as `P` grows).
    pub monotone: bool,
    pub monotonicity_violations: Vec<usize>,
    pub all_converged: bool,
    pub assessment: String,
    pub flags: Vec<String>,
}

/// Indices `i` where `values[i + 1] < values[i] - slack * max(|values[i]|, 1e-300)`.
fn decreases(values: &[f64], slack: f64) -> Vec<usize> {
    (0..values.len().saturating_sub(1))
        .filter(|&i| values[i + 1] < values[i] - slack * values[i].abs())
        .collect()
}

pub fn gamma1_experiment(cfg: &Gamma1Config, opts: &SolveOptions) -> Result<Gamma1Report> {
    cfg.m_rule.validate()?;
    cfg.k_rule.validate()?;
    cfg.spec.validate()?;
    if cfg.scales.is_empty() {
        return Err(Error::Validation("empty scale list".into()));
    }
    let models: Vec<TimeFreqModel> = cfg
        .scales
        .iter()
        .map(|&n| TimeFreqModel::new(n, cfg.m_rule.rank(n), cfg.k_rule.rank(n)))
        .collect::<Result<_>>()?;
    let specs = NormSpecs::Single(cfg.spec.clone());
    let sweep = scale_sweep(
        &cfg.scales,
        |n| {
            let i = cfg.scales.iter().position(|&s| s == n).expect("scale from the list");
            models[i].build()
        },
        &specs,
        opts,
        cfg.extrapolation,
    )?;
    let values: Vec<f64> = sweep.points.iter().map(|p| p.value).collect();
    let violations = decreases(&values, 10.0 * opts.tol);
    let all_converged = sweep.points.iter().all(|p| p.converged);
    let reference = 1.0 / PI;
    let estimate = sweep.fit.limit;
    let mut flags = Vec::new();
    if !all_converged {
        flags.push("not_converged".to_string());
    }
    if !sweep.fit.available {
        flags.push("extrapolation_unavailable".to_string());
    }
    Ok(Gamma1Report {
        ranks: models.iter().map(|m| (m.n, m.m, m.k)).collect(),
        ratio: estimate.map(|e| e / reference),
        estimate,
        reference,
        monotone: violations.is_empty(),
        monotonicity_violations: violations,
        all_converged,
        assessment: "soft".into(),
        flags,
        sweep,
    })
}

fn default_multiplicity() -> u32 {
    1
}

/// Region with multiplicity in `[0, 1]^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MultiplicityModel {
    /// Step function on a box grid; `multiplicity` is row-major over cells.
    Step { grid: Vec<usize>, multiplicity: Vec<u32> },
    /// Product of `n` copies of the Cantor set with `pieces` maps of ratio
    /// `ratio`; the scale parameter is the depth.
    Cantor {
        n: usize,
        ratio: f64,
        pieces: usize,
        #[serde(default = "default_multiplicity")]
        multiplicity: u32,
    },
}

/// A diagonal tuple on a product point set, with multiplicity.
struct PointCloud {
    /// Sorted coordinate values per axis.
    axes: Vec<Vec<f64>>,
    /// Multi-index and multiplicity per point, row-major.
    points: Vec<(Vec<usize>, u32)>,
}

impl MultiplicityModel {
    pub fn uniform_box(n: usize) -> Self {
        MultiplicityModel::Step { grid: vec![1; n], multiplicity: vec![1] }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MultiplicityModel::Step { grid, multiplicity } => {
                if grid.is_empty() || grid.contains(&0) {
                    return Err(Error::Validation("step grid needs positive sizes in every coordinate".into()));
                }
                let cells: usize = grid.iter().product();
                if multiplicity.len() != cells {
                    return Err(Error::Validation(format!(
                        "step multiplicity has {} entries for {cells} cells",
                        multiplicity.len()
                    )));
                }
                if multiplicity.iter().all(|&m| m == 0) {
                    return Err(Error::Validation("step multiplicity is identically zero".into()));
                }
            }
            MultiplicityModel::Cantor { n, ratio, pieces, multiplicity } => {
                if *n == 0 || *pieces < 2 || *multiplicity == 0 {
                    return Err(Error::Validation("cantor model needs n >= 1, pieces >= 2, multiplicity >= 1".into()));
                }
                if !(*ratio > 0.0 && *ratio * *pieces as f64 <= 1.0) {
                    return Err(Error::Validation(format!("cantor ratio {ratio} overlaps with {pieces} pieces")));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        match self {
            MultiplicityModel::Step { grid, .. } => grid.len(),
            MultiplicityModel::Cantor { n, .. } => *n,
        }
    }

    /// `sum m * cell volume` for step models, 0 for Lebesgue-null Cantor sets.
    pub fn lebesgue_integral(&self) -> f64 {
        match self {
            MultiplicityModel::Step { grid, multiplicity } => {
                let vol: f64 = grid.iter().map(|&g| 1.0 / g as f64).product();
                multiplicity.iter().map(|&m| m as f64 * vol).sum()
            }
            MultiplicityModel::Cantor { ratio, pieces, multiplicity, .. } => {
                if (ratio * *pieces as f64 - 1.0).abs() < 1e-15 {
                    *multiplicity as f64
                } else {
                    0.0
                }
            }
        }
    }

    /// Integral of `m` against the reference measure: Lebesgue for step
    /// models, the normalized Hutchinson measure for Cantor products.
    pub fn reference_integral(&self) -> f64 {
        match self {
            MultiplicityModel::Step { .. } => self.lebesgue_integral(),
            MultiplicityModel::Cantor { multiplicity, .. } => *multiplicity as f64,
        }
    }

    /// Hutchinson weight of each depth-`depth` cell of a Cantor product.
    pub fn hutchinson_weights(&self, depth: u32) -> Option<Vec<f64>> {
        match self {
            MultiplicityModel::Cantor { n, pieces, .. } => {
                let cells = pieces.pow(*n as u32).pow(depth);
                Some(vec![1.0 / cells as f64; cells])
            }
            MultiplicityModel::Step { .. } => None,
        }
    }

    /// Similarity dimension `log(pieces^n) / log(1/ratio)` of a Cantor product.
    pub fn similarity_dimension(&self) -> Option<f64> {
        match self {
            MultiplicityModel::Cantor { n, ratio, pieces, .. } => {
                Some(*n as f64 * (*pieces as f64).ln() / (1.0 / ratio).ln())
            }
            MultiplicityModel::Step { .. } => None,
        }
    }

    /// Same model with coordinate axes in reverse order.
    pub fn reversed(&self) -> Self {
        match self {
            MultiplicityModel::Step { grid, multiplicity } => {
                let n = grid.len();
                let rgrid: Vec<usize> = grid.iter().rev().copied().collect();
                let mut out = vec![0; multiplicity.len()];
                for (flat, &m) in multiplicity.iter().enumerate() {
                    let idx = unflatten(flat, grid);
                    let ridx: Vec<usize> = (0..n).map(|a| idx[n - 1 - a]).collect();
                    out[flatten(&ridx, &rgrid)] = m;
                }
                MultiplicityModel::Step { grid: rgrid, multiplicity: out }
            }
            other => other.clone(),
        }
    }

    fn cloud(&self, scale: usize) -> Result<PointCloud> {
        self.validate()?;
        match self {
            MultiplicityModel::Step { grid, multiplicity } => {
                if scale == 0 || grid.iter().any(|&g| scale % g != 0) {
                    return Err(Error::Validation(format!("scale {scale} is not a multiple of the step grid {grid:?}")));
                }
                let n = grid.len();
                let fine = vec![scale; n];
                let total = scale.pow(n as u32);
                let axes = vec![(0..scale).map(|i| (i as f64 + 0.5) / scale as f64).collect(); n];
                let points = (0..total)
                    .map(|flat| {
                        let idx = unflatten(flat, &fine);
                        let coarse: Vec<usize> = idx.iter().zip(grid).map(|(&i, &g)| i * g / scale).collect();
                        let m = multiplicity[flatten(&coarse, grid)];
                        (idx, m)
                    })
                    .collect();
                Ok(PointCloud { axes, points })
            }
            MultiplicityModel::Cantor { n, ratio, pieces, multiplicity } => {
                let mut centers = vec![0.5];
                let mut width = 1.0;
                for _ in 0..scale {
                    let w = width * ratio;
                    let gap = if *pieces > 1 { (width - w * *pieces as f64) / (*pieces - 1) as f64 } else { 0.0 };
                    centers = centers
                        .iter()
                        .flat_map(|&c0| {
                            let left = c0 - 0.5 * width;
                            (0..*pieces).map(move |k| left + k as f64 * (w + gap) + 0.5 * w)
                        })
                        .collect();
                    width = w;
                }
                let side = centers.len();
                let dims = vec![side; *n];
                let points = (0..side.pow(*n as u32)).map(|flat| (unflatten(flat, &dims), *multiplicity)).collect();
                Ok(PointCloud { axes: vec![centers; *n], points })
            }
        }
    }

    /// Diagonal tuple of the coordinates on the depth/resolution-`scale`
    /// point set, with each multiplicity layer carrying its own low/high-pass
    /// plates built from the nearest-neighbour Laplacian of the layer.
    pub fn realize(&self, scale: usize, m_rule: &RankRule, k_rule: &RankRule) -> Result<(OperatorTuple, Condenser)> {
        let cloud = self.cloud(scale)?;
        let n = self.n();
        let max_m = cloud.points.iter().map(|p| p.1).max().unwrap_or(0);
        let mut coords: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut bases: Vec<CMat> = Vec::new();
        let (mut p_idx, mut q_idx) = (Vec::new(), Vec::new());
        let mut offset = 0;
        for layer in 1..=max_m {
            let members: Vec<&Vec<usize>> =
                cloud.points.iter().filter(|p| p.1 >= layer).map(|p| &p.0).collect();
            let size = members.len();
            let lap = layer_laplacian(&members);
            let (vals, vecs) = linalg::hermitian_eigen(&lap)?;
            let m = cluster_end(&vals, m_rule.rank(size));
            let k = cluster_end(&vals, k_rule.rank(size));
            if !(m < k && k < size) || (m == 0 && m_rule.rank(size) > 0) {
                return Err(Error::Validation(format!(
                    "layer {layer} with {size} points gives plate ranks M={m}, K={k}; need M < K < N"
                )));
            }
            p_idx.extend(offset..offset + m);
            q_idx.extend(offset + k..offset + size);
            for (a, col) in coords.iter_mut().enumerate() {
                col.extend(members.iter().map(|idx| cloud.axes[a][idx[a]]));
            }
            bases.push(vecs);
            offset += size;
        }
        let dim = offset;
        let mut v = CMat::zeros(dim, dim);
        let mut o = 0;
        for b in &bases {
            v.view_mut((o, o), (b.nrows(), b.ncols())).copy_from(b);
            o += b.nrows();
        }
        let comps = coords
            .iter()
            .map(|col| linalg::hermitian_part(&(v.adjoint() * linalg::diag_real(col) * &v)))
            .collect();
        let tuple = OperatorTuple::selfadjoint(comps)?;
        let cond = make_condenser(dim, &ProjectionSource::Indices(p_idx), &ProjectionSource::Indices(q_idx))?;
        Ok((tuple, cond))
    }
}

fn unflatten(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for a in (0..dims.len()).rev() {
        idx[a] = flat % dims[a];
        flat /= dims[a];
    }
    idx
}

fn flatten(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

fn layer_laplacian(members: &[&Vec<usize>]) -> CMat {
    let size = members.len();
    let mut lap = CMat::zeros(size, size);
    for a in 0..size {
        for b in a + 1..size {
            let dist: usize = members[a].iter().zip(members[b].iter()).map(|(&x, &y)| x.abs_diff(y)).sum();
            if dist == 1 {
                lap[(a, b)] = c(-1.0);
                lap[(b, a)] = c(-1.0);
                lap[(a, a)] += c(1.0);
                lap[(b, b)] += c(1.0);
            }
        }
    }
    lap
}

/// Moves a rank boundary past any cluster of (numerically) equal eigenvalues
/// it would split, so the plate does not depend on the eigenbasis chosen.
fn cluster_end(vals: &[f64], rank: usize) -> usize {
    let mut r = rank.min(vals.len());
    if r == 0 {
        return 0;
    }
    let scale = vals.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    while r < vals.len() && (vals[r] - vals[r - 1]).abs() <= 1e-9 * scale {
        r += 1;
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledModel {
    pub label: String,
    pub model: MultiplicityModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioConfig {
    pub models: Vec<LabeledModel>,
    pub scales: Vec<usize>,
    pub m_rule: RankRule,
    pub k_rule: RankRule,
    pub specs: NormSpecs,
    /// Exponent applied to the estimate; defaults to `n`.
    #[serde(default)]
    pub power: Option<f64>,
    #[serde(default = "default_extrapolation")]
    pub extrapolation: Extrapolation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub label: String,
    pub n: usize,
    pub integral: f64,
    pub estimate: Option<f64>,
    pub ratio: Option<f64>,
    pub converged: bool,
    pub excluded: bool,
    pub sweep: SweepReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub rows: Vec<RatioRow>,
    pub power: f64,
    /// Coefficient of variation of the included ratios.
    pub cv: Option<f64>,
    pub assessment: String,
    pub flags: Vec<String>,
}

fn coefficient_of_variation(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean != 0.0).then(|| var.sqrt() / mean.abs())
}

pub fn ratio_experiment(cfg: &RatioConfig, opts: &SolveOptions) -> Result<RatioReport> {
    if cfg.models.len() < 2 {
        return Err(Error::Validation("ratio experiment needs at least 2 models".into()));
    }
    let n = cfg.models[0].model.n();
    for m in &cfg.models {
        m.model.validate()?;
        if m.model.n() != n {
            return Err(Error::Validation(format!("model {} has n = {}, expected {n}", m.label, m.model.n())));
        }
    }
    cfg.m_rule.validate()?;
    cfg.k_rule.validate()?;
    cfg.specs.validate(n)?;
    let power = cfg.power.unwrap_or(n as f64);
    let rows: Vec<Result<RatioRow>> = cfg
        .models
        .par_iter()
        .map(|lm| {
            let sweep = scale_sweep(
                &cfg.scales,
                |s| lm.model.realize(s, &cfg.m_rule, &cfg.k_rule),
                &cfg.specs,
                opts,
                cfg.extrapolation,
            )?;
            let integral = lm.model.reference_integral();
            let estimate = sweep.fit.limit;
            let converged = sweep.points.iter().all(|p| p.converged);
            let ratio = estimate.filter(|_| integral > 0.0).map(|e| e.max(0.0).powf(power) / integral);
            Ok(RatioRow {
                label: lm.label.clone(),
                n,
                integral,
                excluded: !converged || ratio.is_none(),
                estimate,
                ratio,
                converged,
                sweep,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let included: Vec<f64> = rows.iter().filter(|r| !r.excluded).filter_map(|r| r.ratio).collect();
    let mut flags = Vec::new();
    if rows.iter().any(|r| r.excluded) {
        flags.push("rows_excluded".to_string());
    }
    Ok(RatioReport { cv: coefficient_of_variation(&included), rows, power, assessment: "soft".into(), flags })
}

/// Checks `sum 1/p_j = 1` and `p_j > 1`.
pub fn validate_exponents(ps: &[f64], n: usize) -> Result<()> {
    if ps.len() != n {
        return Err(Error::Validation(format!("{} exponents for {n} coordinates", ps.len())));
    }
    if ps.iter().any(|&p| !(p > 1.0 && p.is_finite())) {
        return Err(Error::Validation(format!("hybrid exponents must exceed 1, got {ps:?}")));
    }
    let s: f64 = ps.iter().map(|p| 1.0 / p).sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!("hybrid exponents {ps:?} have sum of reciprocals {s}, not 1")));
    }
    Ok(())
}

pub fn hybrid_specs(ps: &[f64]) -> NormSpecs {
    NormSpecs::PerComponent(ps.iter().map(|&p| NormSpec::lorentz(p)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridConfig {
    pub model: MultiplicityModel,
    pub exponent_sets: Vec<Vec<f64>>,
    pub scales: Vec<usize>,
    pub m_rule: RankRule,
    pub k_rule: RankRule,
    #[serde(default = "default_extrapolation")]
    pub extrapolation: Extrapolation,
    /// Also solve the coordinate-reversed model with reversed exponents.
    #[serde(default)]
    pub symmetry_check: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridRow {
    pub exponents: Vec<f64>,
    pub sweep: SweepReport,
    pub estimate: Option<f64>,
    pub converged: bool,
    /// Largest `|k - k_reversed|` over the scales, when requested.
    pub symmetry_gap: Option<f64>,
    pub symmetry_ok: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridReport {
    pub rows: Vec<HybridRow>,
    pub flags: Vec<String>,
}

pub fn hybrid_exponent_scan(cfg: &HybridConfig, opts: &SolveOptions) -> Result<HybridReport> {
    cfg.model.validate()?;
    let n = cfg.model.n();
    for ps in &cfg.exponent_sets {
        validate_exponents(ps, n)?;
    }
    cfg.m_rule.validate()?;
    cfg.k_rule.validate()?;
    let reversed = cfg.model.reversed();
    let rows: Vec<Result<HybridRow>> = cfg
        .exponent_sets
        .par_iter()
        .map(|ps| {
            let sweep = scale_sweep(
                &cfg.scales,
                |s| cfg.model.realize(s, &cfg.m_rule, &cfg.k_rule),
                &hybrid_specs(ps),
                opts,
                cfg.extrapolation,
            )?;
            let mut converged = sweep.points.iter().all(|p| p.converged);
            let (mut gap, mut ok) = (None, None);
            if cfg.symmetry_check {
                let rps: Vec<f64> = ps.iter().rev().copied().collect();
                let rs = scale_sweep(
                    &cfg.scales,
                    |s| reversed.realize(s, &cfg.m_rule, &cfg.k_rule),
                    &hybrid_specs(&rps),
                    opts,
                    Extrapolation::None,
                )?;
                converged &= rs.points.iter().all(|p| p.converged);
                let g = sweep
                    .points
                    .iter()
                    .zip(&rs.points)
                    .map(|(a, b)| (a.value - b.value).abs())
                    .fold(0.0, f64::max);
                let scale = sweep.points.iter().map(|p| p.value.abs()).fold(0.0, f64::max).max(1e-300);
                gap = Some(g);
                ok = Some(g <= 2.0 * opts.tol * scale.max(1.0));
            }
            Ok(HybridRow {
                exponents: ps.clone(),
                estimate: sweep.fit.limit,
                sweep,
                converged,
                symmetry_gap: gap,
                symmetry_ok: ok,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut flags = Vec::new();
    if rows.iter().any(|r| !r.converged) {
        flags.push("not_converged".to_string());
    }
    Ok(HybridReport { rows, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve_condenser;

    #[test]
    fn fourier_matrix_is_unitary() {
        let f = fourier_matrix(12);
        assert!((f.adjoint() * &f - CMat::identity(12, 12)).norm() < 1e-12);
        assert_eq!(fourier_order(6), vec![0, 1, -1, 2, -2, 3]);
    }

    #[test]
    fn time_freq_ranks_validated() {
        assert!(TimeFreqModel::new(16, 4, 4).is_err());
        assert!(TimeFreqModel::new(16, 4, 16).is_err());
        assert!(TimeFreqModel::new(16, 0, 8).is_ok());
    }

    #[test]
    fn empty_low_pass_gives_zero() {
        let cfg = Gamma1Config {
            scales: vec![16, 32],
            m_rule: RankRule::Fixed { value: 0 },
            k_rule: RankRule::Fraction { value: 0.5 },
            spec: NormSpec::schatten(1.0),
            extrapolation: Extrapolation::None,
        };
        let r = gamma1_experiment(&cfg, &SolveOptions::default()).unwrap();
        assert!(r.sweep.points.iter().all(|p| p.value == 0.0));
        assert_eq!(r.ratio, Some(0.0));
    }

    #[test]
    fn single_scale_value_is_bounded_by_a_feasible_point() {
        let model = TimeFreqModel::new(32, 2, 16).unwrap();
        let (t, cd) = model.build().unwrap();
        let specs = NormSpecs::Single(NormSpec::schatten(1.0));
        let r = solve_condenser(&t, &cd, &specs, &SolveOptions::default().with_restarts(1)).unwrap();
        let p_only = cd.embed(&cd.zero_variable());
        let bound = crate::operator::objective(&t, &p_only, &specs).unwrap();
        assert!(r.value > 0.0 && r.value <= bound * (1.0 + 1e-9), "{} vs {bound}", r.value);
    }

    #[test]
    fn step_model_integral_and_reverse() {
        let m = MultiplicityModel::Step { grid: vec![2, 3], multiplicity: vec![1, 2, 0, 0, 1, 3] };
        assert!((m.lebesgue_integral() - 7.0 / 6.0).abs() < 1e-15);
        let r = m.reversed();
        assert_eq!(r, MultiplicityModel::Step { grid: vec![3, 2], multiplicity: vec![1, 0, 2, 1, 0, 3] });
        assert_eq!(r.reversed(), m);
    }

    #[test]
    fn cantor_points() {
        let m = MultiplicityModel::Cantor { n: 1, ratio: 1.0 / 3.0, pieces: 2, multiplicity: 1 };
        let cl = m.cloud(2).unwrap();
        let expect = [1.0 / 18.0, 5.0 / 18.0, 13.0 / 18.0, 17.0 / 18.0];
        for (a, b) in cl.axes[0].iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((m.similarity_dimension().unwrap() - 2f64.ln() / 3f64.ln()).abs() < 1e-14);
        let w = m.hutchinson_weights(2).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(MultiplicityModel::Cantor { n: 1, ratio: 0.6, pieces: 2, multiplicity: 1 }.validate().is_err());
    }

    #[test]
    fn realization_layers_and_plates() {
        let m = MultiplicityModel::Step { grid: vec![2], multiplicity: vec![1, 2] };
        let rule_m = RankRule::Fraction { value: 0.25 };
        let rule_k = RankRule::Fraction { value: 0.5 };
        let (t, cd) = m.realize(8, &rule_m, &rule_k).unwrap();
        assert_eq!(t.dim(), 12);
        assert_eq!(cd.rank_p(), 2 + 1);
        assert_eq!(cd.rank_q(), 4 + 2);
        assert!(m.realize(7, &rule_m, &rule_k).is_err());
    }

    #[test]
    fn degenerate_clusters_are_not_split() {
        assert_eq!(cluster_end(&[0.0, 1.0, 1.0, 2.0], 2), 3);
        assert_eq!(cluster_end(&[0.0, 1.0, 1.0, 2.0], 3), 3);
        assert_eq!(cluster_end(&[0.0, 1.0], 0), 0);
    }

    #[test]
    fn exponent_validation() {
        assert!(validate_exponents(&[2.0, 2.0], 2).is_ok());
        assert!(validate_exponents(&[3.0, 1.5], 2).is_ok());
        assert!(validate_exponents(&[3.0, 2.0], 2).is_err());
        assert!(validate_exponents(&[2.0], 2).is_err());
    }

    #[test]
    fn ratio_needs_two_models() {
        let cfg = RatioConfig {
            models: vec![LabeledModel { label: "a".into(), model: MultiplicityModel::uniform_box(1) }],
            scales: vec![8],
            m_rule: RankRule::Fixed { value: 1 },
            k_rule: RankRule::Fixed { value: 4 },
            specs: NormSpecs::Single(NormSpec::schatten(1.0)),
            power: None,
            extrapolation: Extrapolation::None,
        };
        assert!(ratio_experiment(&cfg, &SolveOptions::default()).is_err());
    }
}
