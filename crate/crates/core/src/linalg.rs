//! Dense complex linear algebra helpers shared by the solvers.
//!
//! Everything here is a thin layer over `nalgebra`: sorted SVDs, Hermitian
//! eigendecompositions, spectral clipping, and an isometric real
//! parametrization of Hermitian matrices used by the first-order solvers.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

const SVD_MAX_SWEEPS: usize = 1000;

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Builds a complex matrix from real row slices.
pub fn real_matrix(rows: &[&[f64]]) -> CMat {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    CMat::from_fn(nrows, ncols, |i, j| c(rows[i][j]))
}

pub fn diag_real(values: &[f64]) -> CMat {
    let n = values.len();
    CMat::from_fn(n, n, |i, j| if i == j { c(values[i]) } else { C64::new(0.0, 0.0) })
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `[x, y] = xy - yx`.
pub fn commutator(x: &CMat, y: &CMat) -> CMat {
    x * y - y * x
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.norm()
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && (m - m.adjoint()).norm() <= tol
}

fn exactly_hermitian(m: &CMat) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in i..n {
            if m[(i, j)] != m[(j, i)].conj() {
                return false;
            }
        }
    }
    true
}

/// `Some(w)` with `m = w H`, `H` Hermitian, when `m` is Hermitian (`w = 1`) or
/// skew-Hermitian (`w = -i`) up to roundoff.
fn normal_phase(m: &CMat) -> Option<C64> {
    if !m.is_square() {
        return None;
    }
    if exactly_hermitian(m) {
        return Some(c(1.0));
    }
    let n = m.nrows();
    let scale = m.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    let tol = NORMAL_RTOL * scale;
    let (mut herm, mut skew) = (true, true);
    for i in 0..n {
        for j in i..n {
            let (a, b) = (m[(i, j)], m[(j, i)].conj());
            herm &= (a - b).norm() <= tol;
            skew &= (a + b).norm() <= tol;
            if !herm && !skew {
                return None;
            }
        }
    }
    if herm {
        Some(c(1.0))
    } else {
        Some(C64::new(0.0, -1.0))
    }
}

/// Relative entrywise slack for treating a matrix as (skew-)Hermitian.
const NORMAL_RTOL: f64 = 1e-13;

/// SVD of `w H` from the eigendecomposition of `H`.
fn normal_svd(m: &CMat, w: C64) -> Result<Svd> {
    let (vals, vecs) = hermitian_eigen(&(m / w))?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()));
    let n = vals.len();
    let u = CMat::from_fn(n, n, |i, k| {
        let l = vals[order[k]];
        let sign = if l < 0.0 { -1.0 } else { 1.0 };
        vecs[(i, order[k])] * w * sign
    });
    let v_t = CMat::from_fn(n, n, |k, j| vecs[(j, order[k])].conj());
    Ok(Svd { u, s: order.iter().map(|&k| vals[k].abs()).collect(), v_t })
}

/// Thin SVD `m = u * diag(s) * v_t` with singular values sorted nonincreasing.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v_t: CMat,
}

pub fn svd(m: &CMat) -> Result<Svd> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Svd {
            u: CMat::zeros(m.nrows(), 0),
            s: Vec::new(),
            v_t: CMat::zeros(0, m.ncols()),
        });
    }
    check_finite(m)?;
    if let Some(w) = normal_phase(m) {
        return normal_svd(m, w);
    }
    let res = m
        .clone()
        .try_svd(true, true, f64::EPSILON, SVD_MAX_SWEEPS * m.nrows().max(m.ncols()))
        .ok_or_else(|| {
            Error::Numeric(format!(
                "SVD did not converge ({}x{}, frobenius norm {:.3e})",
                m.nrows(),
                m.ncols(),
                m.norm()
            ))
        })?;
    let u = res.u.expect("requested u");
    let v_t = res.v_t.expect("requested v_t");
    let s: Vec<f64> = res.singular_values.iter().copied().collect();
    // nalgebra sorts already; keep an explicit check so downstream weight
    // alignment never depends on that.
    if s.windows(2).all(|w| w[0] >= w[1]) {
        return Ok(Svd { u, s, v_t });
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u = CMat::from_fn(u.nrows(), order.len(), |i, k| u[(i, order[k])]);
    let v_t = CMat::from_fn(order.len(), v_t.ncols(), |k, j| v_t[(order[k], j)]);
    let s = order.iter().map(|&k| s[k]).collect();
    Ok(Svd { u, s, v_t })
}

/// Singular values, nonincreasing. Hermitian inputs use the eigenvalue path.
pub fn singular_values(m: &CMat) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    check_finite(m)?;
    if let Some(w) = normal_phase(m) {
        let (vals, _) = hermitian_eigen(&(m / w))?;
        let mut s: Vec<f64> = vals.into_iter().map(f64::abs).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        return Ok(s);
    }
    let res = m
        .clone()
        .try_svd(false, false, f64::EPSILON, SVD_MAX_SWEEPS * m.nrows().max(m.ncols()))
        .ok_or_else(|| {
            Error::Numeric(format!(
                "SVD did not converge ({}x{}, frobenius norm {:.3e})",
                m.nrows(),
                m.ncols(),
                m.norm()
            ))
        })?;
    let mut s: Vec<f64> = res.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

pub fn opnorm(m: &CMat) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending, eigenvectors
/// as matching columns.
pub fn hermitian_eigen(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMat::zeros(0, 0)));
    }
    check_finite(m)?;
    let h = hermitian_part(m);
    let eig = h
        .clone()
        .try_symmetric_eigen(f64::EPSILON, SVD_MAX_SWEEPS * n)
        .ok_or_else(|| {
            Error::Numeric(format!(
                "Hermitian eigendecomposition did not converge (n = {n}, frobenius norm {:.3e})",
                h.norm()
            ))
        })?;
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let vecs = CMat::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
    Ok((order.iter().map(|&k| vals[k]).collect(), vecs))
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn spectral_map(m: &CMat, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigen(m)?;
    Ok(reassemble(&vals.iter().map(|&x| f(x)).collect::<Vec<_>>(), &vecs))
}

/// `V diag(vals) V*`.
pub fn reassemble(vals: &[f64], vecs: &CMat) -> CMat {
    let mut scaled = vecs.clone();
    for (k, &v) in vals.iter().enumerate() {
        scaled.column_mut(k).scale_mut(v);
    }
    let out = scaled * vecs.adjoint();
    hermitian_part(&out)
}

pub fn check_finite(m: &CMat) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("matrix has non-finite entries".into()))
    }
}

/// Number of real parameters of an `n x n` Hermitian matrix.
pub fn herm_param_len(n: usize) -> usize {
    n * n
}

/// Isometric map from Hermitian matrices (Frobenius inner product
/// `Re tr(A* B)`) to `R^{n^2}`: diagonal entries, then the real and imaginary
/// parts of the strict upper triangle scaled by `sqrt 2`.
pub fn herm_to_vec(h: &CMat) -> Vec<f64> {
    let n = h.nrows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(h[(i, i)].re);
    }
    let r2 = std::f64::consts::SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            out.push(r2 * z.re);
            out.push(r2 * z.im);
        }
    }
    out
}

pub fn vec_to_herm(x: &[f64], n: usize) -> CMat {
    debug_assert_eq!(x.len(), n * n);
    let mut h = CMat::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = c(x[i]);
    }
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = C64::new(x[k] * r2, x[k + 1] * r2);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
            k += 2;
        }
    }
    h
}

pub fn random_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

pub fn random_real_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(rng.sample::<f64, _>(StandardNormal)))
}

pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    hermitian_part(&random_gaussian(n, n, rng))
}

/// Haar-distributed unitary via QR of a complex Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = random_gaussian(n, n, rng);
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0) };
        for i in 0..n {
            q[(i, k)] *= phase;
        }
    }
    q
}

/// Random Hermitian matrix with spectrum uniform in `[0, 1]`.
pub fn random_contraction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let u = random_unitary(n, rng);
    let vals: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    reassemble(&vals, &u)
}

/// Stacks matrices with equal column counts vertically.
pub fn vstack(blocks: &[CMat]) -> CMat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(b);
        r0 += b.nrows();
    }
    out
}
