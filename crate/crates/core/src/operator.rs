//! Operator tuples, condensers, and the block parametrization of the
//! feasible set `{0 <= A <= I : AP = P, AQ = 0}`.
//!
//! Every element of that set has the form `P ⊕ B ⊕ 0` with respect to the
//! decomposition `ran P ⊕ ran(I - P - Q) ⊕ ran Q`, where `0 <= B <= I`. The
//! solvers therefore only ever move the middle block `B`, so all iterates are
//! exactly feasible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::norms::{self, NormSpec};

/// Tolerance for projection and orthogonality checks on matrix inputs.
pub const PROJECTION_TOL: f64 = 1e-10;
const SELFADJOINT_RTOL: f64 = 1e-12;

/// An n-tuple of `d x d` complex matrices.
#[derive(Clone, Debug)]
pub struct OperatorTuple {
    dim: usize,
    components: Vec<CMat>,
    selfadjoint: Vec<bool>,
}

impl OperatorTuple {
    pub fn new(components: Vec<CMat>, selfadjoint: Vec<bool>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Validation("operator tuple needs at least one component".into()));
        }
        if components.len() != selfadjoint.len() {
            return Err(Error::Validation(format!(
                "{} components but {} selfadjoint flags",
                components.len(),
                selfadjoint.len()
            )));
        }
        let dim = components[0].nrows();
        for (j, t) in components.iter().enumerate() {
            if t.nrows() != dim || t.ncols() != dim {
                return Err(Error::Dimension(format!(
                    "component {j} is {}x{}, expected {dim}x{dim}",
                    t.nrows(),
                    t.ncols()
                )));
            }
            linalg::check_finite(t)?;
            if selfadjoint[j] {
                let skew = (t - t.adjoint()).norm();
                if skew > SELFADJOINT_RTOL * t.norm() {
                    return Err(Error::Validation(format!(
                        "component {j} flagged selfadjoint but ||T - T*||_F = {skew:.3e}"
                    )));
                }
            }
        }
        // symmetrize flagged components exactly
        let components = components
            .into_iter()
            .zip(&selfadjoint)
            .map(|(t, &sa)| if sa { linalg::hermitian_part(&t) } else { t })
            .collect();
        Ok(Self { dim, components, selfadjoint })
    }

    /// All components flagged selfadjoint.
    pub fn selfadjoint(components: Vec<CMat>) -> Result<Self> {
        let n = components.len();
        Self::new(components, vec![true; n])
    }

    /// No component flagged selfadjoint.
    pub fn general(components: Vec<CMat>) -> Result<Self> {
        let n = components.len();
        Self::new(components, vec![false; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[CMat] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &CMat {
        &self.components[j]
    }

    pub fn selfadjoint_flags(&self) -> &[bool] {
        &self.selfadjoint
    }

    pub fn all_selfadjoint(&self) -> bool {
        self.selfadjoint.iter().all(|&b| b)
    }

    /// `c * tau` (flags kept; real scaling preserves selfadjointness).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            components: self.components.iter().map(|t| t * c(factor)).collect(),
            selfadjoint: self.selfadjoint.clone(),
        }
    }

    /// `U tau U*`.
    pub fn conjugated(&self, u: &CMat) -> Self {
        let ua = u.adjoint();
        let components = self
            .components
            .iter()
            .zip(&self.selfadjoint)
            .map(|(t, &sa)| {
                let m = u * t * &ua;
                if sa {
                    linalg::hermitian_part(&m)
                } else {
                    m
                }
            })
            .collect();
        Self { dim: self.dim, components, selfadjoint: self.selfadjoint.clone() }
    }

    /// Componentwise direct sum `tau ⊕ sigma`.
    pub fn direct_sum(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Dimension("direct sum of tuples of different lengths".into()));
        }
        let d = self.dim + other.dim;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| {
                let mut m = CMat::zeros(d, d);
                m.view_mut((0, 0), (self.dim, self.dim)).copy_from(a);
                m.view_mut((self.dim, self.dim), (other.dim, other.dim)).copy_from(b);
                m
            })
            .collect();
        let selfadjoint = self.selfadjoint.iter().zip(&other.selfadjoint).map(|(a, b)| *a && *b).collect();
        Ok(Self { dim: d, components, selfadjoint })
    }

    /// Reorders components.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        for &j in order {
            if j >= self.len() || seen[j] {
                return Err(Error::Validation("invalid component permutation".into()));
            }
            seen[j] = true;
        }
        if order.len() != self.len() {
            return Err(Error::Validation("invalid component permutation".into()));
        }
        Ok(Self {
            dim: self.dim,
            components: order.iter().map(|&j| self.components[j].clone()).collect(),
            selfadjoint: order.iter().map(|&j| self.selfadjoint[j]).collect(),
        })
    }
}

/// How a projection is supplied.
#[derive(Clone, Debug)]
pub enum ProjectionSource {
    Matrix(CMat),
    /// Coordinate projection onto the span of these standard basis vectors.
    Indices(Vec<usize>),
}

impl ProjectionSource {
    pub fn zero() -> Self {
        ProjectionSource::Indices(Vec::new())
    }
}

/// An orthogonal pair of projections `(P, Q)`, `PQ = 0`, with an orthonormal
/// basis adapted to `ran P ⊕ middle ⊕ ran Q`.
#[derive(Clone, Debug)]
pub struct Condenser {
    dim: usize,
    p: CMat,
    q: CMat,
    /// Columns: basis of ran P, then the middle, then ran Q.
    basis: CMat,
    rank_p: usize,
    rank_q: usize,
    middle_dim: usize,
    coordinate: bool,
}

fn projection_basis(m: &CMat, name: &str) -> Result<CMat> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::Validation(format!("{name} is not square")));
    }
    linalg::check_finite(m)?;
    let scale = 1.0_f64.max(m.norm());
    if (m - m.adjoint()).norm() > PROJECTION_TOL * scale {
        return Err(Error::Validation(format!("{name} is not selfadjoint")));
    }
    if (m * m - m).norm() > PROJECTION_TOL * scale {
        return Err(Error::Validation(format!("{name} is not idempotent")));
    }
    let (vals, vecs) = linalg::hermitian_eigen(m)?;
    let cols: Vec<usize> = (0..d).filter(|&k| vals[k] > 0.5).collect();
    Ok(CMat::from_fn(d, cols.len(), |i, k| vecs[(i, cols[k])]))
}

/// Gram-Schmidt of `cols` against an orthonormal `against`, twice for
/// stability; returns orthonormal columns.
fn orthonormalize_against(cols: &CMat, against: &CMat) -> Result<CMat> {
    let d = cols.nrows();
    let mut out: Vec<nalgebra::DVector<C64>> = Vec::new();
    for k in 0..cols.ncols() {
        let mut v = cols.column(k).into_owned();
        for _ in 0..2 {
            for a in 0..against.ncols() {
                let ac = against.column(a);
                let proj = ac.dotc(&v);
                v -= ac * proj;
            }
            for prev in &out {
                let proj = prev.dotc(&v);
                v -= prev * proj;
            }
        }
        let n = v.norm();
        if n < 0.5 {
            return Err(Error::Condenser("projection ranges overlap (PQ != 0)".into()));
        }
        out.push(v / c(n));
    }
    let mut m = CMat::zeros(d, out.len());
    for (k, v) in out.iter().enumerate() {
        m.set_column(k, v);
    }
    Ok(m)
}

fn outer(basis: &CMat) -> CMat {
    basis * basis.adjoint()
}

pub fn make_condenser(dim: usize, p: &ProjectionSource, q: &ProjectionSource) -> Result<Condenser> {
    if let (ProjectionSource::Indices(pi), ProjectionSource::Indices(qi)) = (p, q) {
        return coordinate_condenser(dim, pi, qi);
    }
    let to_matrix = |src: &ProjectionSource, name: &str| -> Result<CMat> {
        match src {
            ProjectionSource::Matrix(m) => {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(Error::Dimension(format!("{name} must be {dim}x{dim}")));
                }
                Ok(m.clone())
            }
            ProjectionSource::Indices(idx) => Ok(coordinate_projection(dim, idx, name)?),
        }
    };
    let pm = to_matrix(p, "P")?;
    let qm = to_matrix(q, "Q")?;
    let bp = projection_basis(&pm, "P")?;
    let bq_raw = projection_basis(&qm, "Q")?;
    let overlap = (&pm * &qm).norm();
    if overlap > PROJECTION_TOL * 1.0_f64.max(pm.norm() * qm.norm()) {
        return Err(Error::Condenser(format!("PQ != 0 (||PQ||_F = {overlap:.3e})")));
    }
    let bq = orthonormalize_against(&bq_raw, &bp)?;
    let mut pq = CMat::zeros(dim, bp.ncols() + bq.ncols());
    pq.view_mut((0, 0), (dim, bp.ncols())).copy_from(&bp);
    pq.view_mut((0, bp.ncols()), (dim, bq.ncols())).copy_from(&bq);
    let rest = linalg::identity(dim) - outer(&pq);
    let (vals, vecs) = linalg::hermitian_eigen(&rest)?;
    let cols: Vec<usize> = (0..dim).filter(|&k| vals[k] > 0.5).collect();
    let raw_mid = CMat::from_fn(dim, cols.len(), |i, k| vecs[(i, cols[k])]);
    let bm = orthonormalize_against(&raw_mid, &pq)?;
    let (rp, rq, m0) = (bp.ncols(), bq.ncols(), bm.ncols());
    if rp + rq + m0 != dim {
        return Err(Error::Numeric("block basis has wrong size".into()));
    }
    let mut basis = CMat::zeros(dim, dim);
    basis.view_mut((0, 0), (dim, rp)).copy_from(&bp);
    basis.view_mut((0, rp), (dim, m0)).copy_from(&bm);
    basis.view_mut((0, rp + m0), (dim, rq)).copy_from(&bq);
    Ok(Condenser {
        dim,
        p: outer(&bp),
        q: outer(&bq),
        basis,
        rank_p: rp,
        rank_q: rq,
        middle_dim: m0,
        coordinate: false,
    })
}

fn check_indices(dim: usize, idx: &[usize], name: &str) -> Result<()> {
    let mut seen = vec![false; dim];
    for &i in idx {
        if i >= dim {
            return Err(Error::Validation(format!("{name} index {i} out of range for dimension {dim}")));
        }
        if seen[i] {
            return Err(Error::Validation(format!("{name} index {i} repeated")));
        }
        seen[i] = true;
    }
    Ok(())
}

pub fn coordinate_projection(dim: usize, idx: &[usize], name: &str) -> Result<CMat> {
    check_indices(dim, idx, name)?;
    let mut m = CMat::zeros(dim, dim);
    for &i in idx {
        m[(i, i)] = c(1.0);
    }
    Ok(m)
}

fn coordinate_condenser(dim: usize, pi: &[usize], qi: &[usize]) -> Result<Condenser> {
    check_indices(dim, pi, "P")?;
    check_indices(dim, qi, "Q")?;
    let mut pi = pi.to_vec();
    let mut qi = qi.to_vec();
    pi.sort_unstable();
    qi.sort_unstable();
    if let Some(i) = pi.iter().find(|i| qi.contains(i)) {
        return Err(Error::Condenser(format!("P and Q share basis index {i} (PQ != 0)")));
    }
    let mid: Vec<usize> = (0..dim).filter(|i| !pi.contains(i) && !qi.contains(i)).collect();
    let order: Vec<usize> = pi.iter().chain(&mid).chain(&qi).copied().collect();
    let mut basis = CMat::zeros(dim, dim);
    for (k, &i) in order.iter().enumerate() {
        basis[(i, k)] = c(1.0);
    }
    Ok(Condenser {
        dim,
        p: coordinate_projection(dim, &pi, "P")?,
        q: coordinate_projection(dim, &qi, "Q")?,
        basis,
        rank_p: pi.len(),
        rank_q: qi.len(),
        middle_dim: mid.len(),
        coordinate: true,
    })
}

impl Condenser {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> &CMat {
        &self.p
    }

    pub fn q(&self) -> &CMat {
        &self.q
    }

    pub fn rank_p(&self) -> usize {
        self.rank_p
    }

    pub fn rank_q(&self) -> usize {
        self.rank_q
    }

    pub fn middle_dim(&self) -> usize {
        self.middle_dim
    }

    /// True when both plates are coordinate projections.
    pub fn is_coordinate(&self) -> bool {
        self.coordinate
    }

    /// Unitary whose columns span ran P, the middle, and ran Q in that order.
    pub fn block_basis(&self) -> &CMat {
        &self.basis
    }

    pub fn middle_basis(&self) -> CMat {
        self.basis.columns(self.rank_p, self.middle_dim).into_owned()
    }

    /// `W* m W` in the block basis.
    pub fn to_block(&self, m: &CMat) -> CMat {
        self.basis.adjoint() * m * &self.basis
    }

    /// `W m W*` back to the original basis.
    pub fn from_block(&self, m: &CMat) -> CMat {
        &self.basis * m * self.basis.adjoint()
    }

    /// `diag(I, B, 0)` in the block basis.
    pub fn embed_block(&self, middle: &CMat) -> CMat {
        let mut a = CMat::zeros(self.dim, self.dim);
        for i in 0..self.rank_p {
            a[(i, i)] = c(1.0);
        }
        a.view_mut((self.rank_p, self.rank_p), (self.middle_dim, self.middle_dim)).copy_from(middle);
        a
    }

    /// `A = P ⊕ B ⊕ 0` in the original basis.
    pub fn embed(&self, var: &ContractionVariable) -> CMat {
        let a = self.from_block(&self.embed_block(&var.middle));
        linalg::hermitian_part(&a)
    }

    /// Compresses to the middle block, symmetrizes, and clips the spectrum to
    /// `[0, 1]`. This is the Frobenius-nearest feasible point among
    /// block-diagonal ones.
    pub fn project_to_feasible(&self, a_raw: &CMat) -> Result<ContractionVariable> {
        if a_raw.nrows() != self.dim || a_raw.ncols() != self.dim {
            return Err(Error::Dimension(format!("expected a {0}x{0} matrix", self.dim)));
        }
        let block = self.to_block(a_raw);
        let mid = block.view((self.rank_p, self.rank_p), (self.middle_dim, self.middle_dim)).into_owned();
        Ok(ContractionVariable { middle: clip_unit(&linalg::hermitian_part(&mid))? })
    }

    /// The feasible point `P` itself (middle block zero).
    pub fn zero_variable(&self) -> ContractionVariable {
        ContractionVariable { middle: CMat::zeros(self.middle_dim, self.middle_dim) }
    }

    /// Middle block `t I`.
    pub fn scalar_variable(&self, t: f64) -> ContractionVariable {
        ContractionVariable {
            middle: CMat::identity(self.middle_dim, self.middle_dim) * c(t.clamp(0.0, 1.0)),
        }
    }
}

/// Clips the spectrum of a Hermitian matrix to `[0, 1]`.
pub fn clip_unit(h: &CMat) -> Result<CMat> {
    if h.nrows() == 0 {
        return Ok(h.clone());
    }
    linalg::spectral_map(h, |x| x.clamp(0.0, 1.0))
}

/// A point of the feasible set, stored through its middle block.
#[derive(Clone, Debug)]
pub struct ContractionVariable {
    middle: CMat,
}

impl ContractionVariable {
    /// Validates `0 <= B <= I` (within `1e-12`) and symmetrizes.
    pub fn new(middle: CMat) -> Result<Self> {
        if middle.nrows() != middle.ncols() {
            return Err(Error::Dimension("middle block must be square".into()));
        }
        if !linalg::is_hermitian(&middle, 1e-12 * middle.norm().max(1.0)) {
            return Err(Error::Validation("middle block is not selfadjoint".into()));
        }
        let h = linalg::hermitian_part(&middle);
        let (vals, _) = linalg::hermitian_eigen(&h)?;
        if vals.first().is_some_and(|&v| v < -1e-12) || vals.last().is_some_and(|&v| v > 1.0 + 1e-12) {
            return Err(Error::Validation("middle block spectrum outside [0, 1]".into()));
        }
        Ok(Self { middle: h })
    }

    pub(crate) fn from_clipped(middle: CMat) -> Self {
        Self { middle }
    }

    pub fn middle(&self) -> &CMat {
        &self.middle
    }
}

/// Per-component commutators `[A, T_j]`.
pub fn commutators(tuple: &OperatorTuple, a: &CMat) -> Result<Vec<CMat>> {
    check_dims(tuple, a)?;
    Ok(tuple.components().iter().map(|t| linalg::commutator(a, t)).collect())
}

/// Block column `([T_1, A]; ...; [T_n, A])`, shape `nd x d`.
pub fn commutator_column(tuple: &OperatorTuple, a: &CMat) -> Result<CMat> {
    check_dims(tuple, a)?;
    let blocks: Vec<CMat> = tuple.components().iter().map(|t| linalg::commutator(t, a)).collect();
    Ok(linalg::vstack(&blocks))
}

fn check_dims(tuple: &OperatorTuple, a: &CMat) -> Result<()> {
    if a.nrows() != tuple.dim() || a.ncols() != tuple.dim() {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, tuple dimension is {}",
            a.nrows(),
            a.ncols(),
            tuple.dim()
        )));
    }
    Ok(())
}

/// One norm for every component, or one per component (hybrid).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NormSpecs {
    Single(NormSpec),
    PerComponent(Vec<NormSpec>),
}

impl From<NormSpec> for NormSpecs {
    fn from(s: NormSpec) -> Self {
        NormSpecs::Single(s)
    }
}

impl NormSpecs {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            NormSpecs::Single(s) => s.validate(),
            NormSpecs::PerComponent(v) => {
                if v.len() != n {
                    return Err(Error::Validation(format!("{} norm specs for {n} components", v.len())));
                }
                v.iter().try_for_each(NormSpec::validate)
            }
        }
    }

    pub fn for_component(&self, j: usize) -> &NormSpec {
        match self {
            NormSpecs::Single(s) => s,
            NormSpecs::PerComponent(v) => &v[j],
        }
    }

    /// Common Schatten exponent when every component uses the same Schatten norm.
    pub fn common_schatten_p(&self, n: usize) -> Option<f64> {
        let p0 = self.for_component(0).schatten_p()?;
        (0..n).all(|j| self.for_component(j).schatten_p() == Some(p0)).then_some(p0)
    }
}

/// `max_j |[A, T_j]|_{J_j}`.
pub fn objective(tuple: &OperatorTuple, a: &CMat, specs: &NormSpecs) -> Result<f64> {
    specs.validate(tuple.len())?;
    let comms = commutators(tuple, a)?;
    let mut best = 0.0_f64;
    for (j, z) in comms.iter().enumerate() {
        best = best.max(norms::matrix_norm(z, specs.for_component(j))?);
    }
    Ok(best)
}

/// Dense matrix JSON: `{"dim": d, "re": [[...]], "im": [[...]]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        let re = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].re).collect()).collect();
        let has_im = m.iter().any(|z| z.im != 0.0);
        let im = has_im
            .then(|| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].im).collect()).collect());
        Self { dim: m.nrows(), re, im }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let d = self.dim;
        let check = |rows: &Vec<Vec<f64>>, part: &str| -> Result<()> {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::Dimension(format!("matrix '{part}' part must be {d}x{d}")));
            }
            Ok(())
        };
        check(&self.re, "re")?;
        if let Some(im) = &self.im {
            check(im, "im")?;
        }
        let m = CMat::from_fn(d, d, |i, j| {
            C64::new(self.re[i][j], self.im.as_ref().map_or(0.0, |im| im[i][j]))
        });
        linalg::check_finite(&m)?;
        Ok(m)
    }
}

/// Projection JSON: a matrix or `{"basis_indices": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProjectionJson {
    Indices { basis_indices: Vec<usize> },
    Matrix(MatrixJson),
}

impl ProjectionJson {
    pub fn to_source(&self) -> Result<ProjectionSource> {
        Ok(match self {
            ProjectionJson::Indices { basis_indices } => ProjectionSource::Indices(basis_indices.clone()),
            ProjectionJson::Matrix(m) => ProjectionSource::Matrix(m.to_matrix()?),
        })
    }
}

/// Tuple JSON: `{"components": [matrix...], "selfadjoint": [bool...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TupleJson {
    pub components: Vec<MatrixJson>,
    #[serde(default)]
    pub selfadjoint: Option<Vec<bool>>,
}

impl TupleJson {
    pub fn to_tuple(&self) -> Result<OperatorTuple> {
        let comps = self.components.iter().map(MatrixJson::to_matrix).collect::<Result<Vec<_>>>()?;
        let flags = self.selfadjoint.clone().unwrap_or_else(|| vec![false; comps.len()]);
        OperatorTuple::new(comps, flags)
    }

    pub fn from_tuple(t: &OperatorTuple) -> Self {
        Self {
            components: t.components().iter().map(MatrixJson::from_matrix).collect(),
            selfadjoint: Some(t.selfadjoint_flags().to_vec()),
        }
    }
}
