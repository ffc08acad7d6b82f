//! Rearrangement-invariant norms on sequences and, through singular values,
//! on matrices.
//!
//! A [`NormSpec`] describes one of four symmetric gauges:
//!
//! * `schatten`  : `(sum s_j^p)^(1/p)`, `p >= 1`;
//! * `lorentz_p1`: `sum j^(-1 + 1/p) s*_j`, `p >= 1`;
//! * `macaev`    : `sum s*_j / j`;
//! * `weights`   : `sum w_j s*_j` for an explicit nonincreasing `w >= 0`.
//!
//! `s*` is the nonincreasing rearrangement of `|s|`. The last three are
//! weighted sums of the rearrangement; callers that need the weights branch on
//! [`NormKind`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Schatten,
    LorentzP1,
    Macaev,
    Weights,
}

/// JSON form: `{"kind": ..., "p": ..., "weights": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    pub kind: NormKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Maximum sequence length ever evaluated; weighted kinds ignore terms
    /// beyond it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_hint: Option<usize>,
}

/// Relative gap below which consecutive sorted values count as tied.
const TIE_RTOL: f64 = 1e-12;

impl NormSpec {
    pub fn schatten(p: f64) -> Self {
        Self { kind: NormKind::Schatten, p: Some(p), weights: None, length_hint: None }
    }

    pub fn lorentz(p: f64) -> Self {
        Self { kind: NormKind::LorentzP1, p: Some(p), weights: None, length_hint: None }
    }

    pub fn macaev() -> Self {
        Self { kind: NormKind::Macaev, p: None, weights: None, length_hint: None }
    }

    pub fn weights(weights: Vec<f64>) -> Self {
        Self { kind: NormKind::Weights, p: None, weights: Some(weights), length_hint: None }
    }

    pub fn with_length_hint(mut self, hint: usize) -> Self {
        self.length_hint = Some(hint);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.length_hint == Some(0) {
            return Err(Error::InvalidNorm("length_hint must be positive".into()));
        }
        match self.kind {
            NormKind::Schatten | NormKind::LorentzP1 => {
                let p = self
                    .p
                    .ok_or_else(|| Error::InvalidNorm(format!("{:?} norm requires p", self.kind)))?;
                if !(p.is_finite() && p >= 1.0) {
                    return Err(Error::InvalidNorm(format!("p must be finite and >= 1, got {p}")));
                }
            }
            NormKind::Macaev => {}
            NormKind::Weights => {
                let w = self
                    .weights
                    .as_ref()
                    .ok_or_else(|| Error::InvalidNorm("weights norm requires a weight list".into()))?;
                if w.is_empty() {
                    return Err(Error::InvalidNorm("weight list is empty".into()));
                }
                if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::InvalidNorm("weights must be finite and nonnegative".into()));
                }
                if w.windows(2).any(|p| p[1] > p[0]) {
                    return Err(Error::InvalidNorm("weights must be nonincreasing".into()));
                }
            }
        }
        Ok(())
    }

    /// The Schatten exponent when this is a Schatten norm.
    pub fn schatten_p(&self) -> Option<f64> {
        match self.kind {
            NormKind::Schatten => self.p,
            _ => None,
        }
    }

    fn effective_len(&self, n: usize) -> usize {
        let hint = match (self.kind, self.length_hint) {
            (_, Some(h)) => h,
            (NormKind::Weights, None) => self.weights.as_ref().map_or(n, |w| w.len()),
            _ => n,
        };
        n.min(hint)
    }
}

/// Weight sequence `(w_1, ..., w_n)` for the weighted kinds; empty for
/// Schatten norms, which are not weighted sums.
pub fn induced_weights(spec: &NormSpec, n: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Validation("weight sequence length must be positive".into()));
    }
    let w = match spec.kind {
        NormKind::Schatten => Vec::new(),
        NormKind::LorentzP1 => {
            let e = -1.0 + 1.0 / spec.p.expect("validated");
            (1..=n).map(|j| (j as f64).powf(e)).collect()
        }
        NormKind::Macaev => (1..=n).map(|j| 1.0 / j as f64).collect(),
        NormKind::Weights => {
            let given = spec.weights.as_ref().expect("validated");
            (0..n).map(|j| given.get(j).copied().unwrap_or(0.0)).collect()
        }
    };
    Ok(w)
}

/// Nonincreasing rearrangement of `|s|`. Stable, exact comparisons.
pub fn rearrange(s: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = s.iter().map(|x| x.abs()).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

fn schatten_of_sorted(sorted: &[f64], p: f64) -> f64 {
    let top = sorted.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return sorted.iter().sum();
    }
    let sum: f64 = sorted.iter().map(|x| (x / top).powf(p)).sum();
    top * sum.powf(1.0 / p)
}

fn weighted_of_sorted(sorted: &[f64], spec: &NormSpec) -> Result<f64> {
    let len = spec.effective_len(sorted.len());
    if len == 0 {
        return Ok(0.0);
    }
    let w = induced_weights(spec, len)?;
    Ok(w.iter().zip(sorted).map(|(w, s)| w * s).sum())
}

/// Norm of a sequence; entries are taken in absolute value.
pub fn vector_norm(s: &[f64], spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    let sorted = rearrange(s);
    norm_of_sorted(&sorted, spec)
}

/// Norm of an already nonincreasing nonnegative sequence.
pub fn norm_of_sorted(sorted: &[f64], spec: &NormSpec) -> Result<f64> {
    match spec.kind {
        NormKind::Schatten => Ok(schatten_of_sorted(sorted, spec.p.expect("validated"))),
        _ => weighted_of_sorted(sorted, spec),
    }
}

/// Unitarily invariant norm of a complex matrix via its singular values.
pub fn matrix_norm(m: &CMat, spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    let s = linalg::singular_values(m)?;
    norm_of_sorted(&s, spec)
}

/// A subgradient of the symmetric gauge at a nonincreasing nonnegative `s`,
/// aligned with `s`. Tied groups share the average of their weights; zero
/// entries get weight zero.
pub fn gauge_subgradient(sorted: &[f64], spec: &NormSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = sorted.len();
    let top = sorted.first().copied().unwrap_or(0.0);
    if n == 0 || top == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut w = match spec.kind {
        NormKind::Schatten => {
            let p = spec.p.expect("validated");
            if p == 1.0 {
                sorted.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect()
            } else {
                let norm = schatten_of_sorted(sorted, p);
                sorted.iter().map(|&x| (x / norm).powf(p - 1.0)).collect()
            }
        }
        _ => {
            let len = spec.effective_len(n);
            let mut w = induced_weights(spec, len)?;
            w.resize(n, 0.0);
            average_ties(&mut w, sorted, TIE_RTOL * top);
            w
        }
    };
    for (wi, &si) in w.iter_mut().zip(sorted) {
        if si == 0.0 {
            *wi = 0.0;
        }
    }
    Ok(w)
}

fn average_ties(w: &mut [f64], sorted: &[f64], tol: f64) {
    let n = sorted.len();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && sorted[end - 1] - sorted[end] <= tol {
            end += 1;
        }
        if end - start > 1 {
            let avg = w[start..end].iter().sum::<f64>() / (end - start) as f64;
            w[start..end].iter_mut().for_each(|x| *x = avg);
        }
        start = end;
    }
}

/// Subgradient of `x -> norm(x)` for a real signed vector.
pub fn vector_subgradient(x: &[f64], spec: &NormSpec) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()));
    let sorted: Vec<f64> = order.iter().map(|&i| x[i].abs()).collect();
    let w = gauge_subgradient(&sorted, spec)?;
    let mut g = vec![0.0; x.len()];
    for (rank, &i) in order.iter().enumerate() {
        // zero entries already carry weight zero
        g[i] = w[rank] * x[i].signum();
    }
    Ok(g)
}

/// Subgradient `G = U diag(w) V*` of the matrix norm at `m`, so that
/// `norm(N) >= norm(M) + Re tr(G* (N - M))` for every `N`.
pub fn norm_subgradient(m: &CMat, spec: &NormSpec) -> Result<CMat> {
    let (g, _) = norm_and_subgradient(m, spec)?;
    Ok(g)
}

/// Norm value together with a subgradient, sharing one SVD.
pub fn norm_and_subgradient(m: &CMat, spec: &NormSpec) -> Result<(CMat, f64)> {
    spec.validate()?;
    let d = linalg::svd(m)?;
    let value = norm_of_sorted(&d.s, spec)?;
    let w = gauge_subgradient(&d.s, spec)?;
    let mut uw = d.u.clone();
    for (k, &wk) in w.iter().enumerate() {
        uw.column_mut(k).scale_mut(wk);
    }
    let g = if w.is_empty() { CMat::zeros(m.nrows(), m.ncols()) } else { uw * d.v_t };
    Ok((g, value))
}

/// `Re tr(a* b)`.
pub fn real_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y): (&C64, &C64)| (x.conj() * y).re).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag_real, random_gaussian, random_unitary};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn all_specs() -> Vec<NormSpec> {
        vec![
            NormSpec::schatten(1.0),
            NormSpec::schatten(2.0),
            NormSpec::schatten(3.5),
            NormSpec::lorentz(1.0),
            NormSpec::lorentz(2.0),
            NormSpec::lorentz(3.0),
            NormSpec::macaev(),
            NormSpec::weights(vec![2.0, 1.0, 1.0, 0.5]),
        ]
    }

    #[test]
    fn induced_weights_examples() {
        assert_eq!(induced_weights(&NormSpec::lorentz(1.0), 3).unwrap(), vec![1.0, 1.0, 1.0]);
        let m = induced_weights(&NormSpec::macaev(), 4).unwrap();
        for (a, b) in m.iter().zip([1.0, 0.5, 1.0 / 3.0, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
        let l = induced_weights(&NormSpec::lorentz(2.0), 3).unwrap();
        for (a, b) in l.iter().zip([1.0, 2f64.powf(-0.5), 3f64.powf(-0.5)]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(induced_weights(&NormSpec::schatten(2.0), 3).unwrap().is_empty());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(NormSpec::schatten(0.5).validate().is_err());
        assert!(NormSpec::lorentz(f64::NAN).validate().is_err());
        assert!(NormSpec::weights(vec![1.0, 2.0]).validate().is_err());
        assert!(NormSpec::weights(vec![1.0, -0.1]).validate().is_err());
        assert!(induced_weights(&NormSpec::schatten(0.9), 2).is_err());
    }

    #[test]
    fn vector_norm_examples() {
        assert!(close(vector_norm(&[3.0, 4.0], &NormSpec::schatten(2.0)).unwrap(), 5.0, 1e-15));
        let mac = vector_norm(&[1.0; 4], &NormSpec::macaev()).unwrap();
        assert!(close(mac, 25.0 / 12.0, 1e-15));
        let lor = vector_norm(&[0.5, 1.0], &NormSpec::lorentz(2.0)).unwrap();
        assert!(close(lor, 1.0 + 0.5 * 2f64.powf(-0.5), 1e-15));
        assert!((lor - 1.353553).abs() < 1e-6);
    }

    #[test]
    fn length_hint_truncates_weighted_sum() {
        let spec = NormSpec::lorentz(1.0).with_length_hint(2);
        assert_eq!(vector_norm(&[1.0, 3.0, 2.0], &spec).unwrap(), 5.0);
    }

    #[test]
    fn matrix_norm_examples() {
        let i3 = crate::linalg::identity(3);
        assert!(close(matrix_norm(&i3, &NormSpec::schatten(1.0)).unwrap(), 3.0, 1e-14));
        // Independent check: the singular values of diag(2, 1) are 2 and 1.
        let d = diag_real(&[2.0, 1.0]);
        let expected = 2.0 + 2f64.powf(-0.5);
        assert!(close(matrix_norm(&d, &NormSpec::lorentz(2.0)).unwrap(), expected, 1e-14));
        assert!((expected - 2.707107).abs() < 1e-6);
    }

    #[test]
    fn rank_one_norm_is_leading_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_gaussian(4, 1, &mut rng);
        let v = random_gaussian(5, 1, &mut rng);
        let m = (&u / linalg::c(u.norm())) * (&v / linalg::c(v.norm())).adjoint();
        for spec in all_specs() {
            let lead = match spec.kind {
                NormKind::Schatten => 1.0,
                _ => induced_weights(&spec, 1).unwrap()[0],
            };
            assert!(close(matrix_norm(&m, &spec).unwrap(), lead, 1e-12), "{spec:?}");
        }
    }

    #[test]
    fn subgradient_examples() {
        let d = diag_real(&[2.0, 1.0]);
        let g = norm_subgradient(&d, &NormSpec::schatten(1.0)).unwrap();
        assert!((g - diag_real(&[1.0, 1.0])).norm() < 1e-13);
        let g = norm_subgradient(&d, &NormSpec::lorentz(2.0)).unwrap();
        assert!((&g - diag_real(&[1.0, 2f64.powf(-0.5)])).norm() < 1e-13);
        // supporting inequality on random directions
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = matrix_norm(&d, &NormSpec::lorentz(2.0)).unwrap();
        for _ in 0..100 {
            let n = random_gaussian(2, 2, &mut rng);
            let lhs = matrix_norm(&n, &NormSpec::lorentz(2.0)).unwrap();
            let rhs = base + real_inner(&g, &(&n - &d));
            assert!(lhs >= rhs - 1e-12);
        }
        let z = CMat::zeros(3, 3);
        for spec in all_specs() {
            assert_eq!(norm_subgradient(&z, &spec).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn tied_singular_values_share_weights() {
        let d = diag_real(&[1.0, 1.0, 0.5]);
        let g = norm_subgradient(&d, &NormSpec::macaev()).unwrap();
        let expect = diag_real(&[0.75, 0.75, 1.0 / 3.0]);
        assert!((g - expect).norm() < 1e-12);
    }

    #[test]
    fn subgradient_supporting_inequality_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for spec in all_specs() {
            for trial in 0..1000 {
                let (r, c) = (1 + trial % 4, 1 + (trial / 4) % 4);
                let m = random_gaussian(r, c, &mut rng);
                let n = random_gaussian(r, c, &mut rng);
                let (g, base) = norm_and_subgradient(&m, &spec).unwrap();
                let lhs = matrix_norm(&n, &spec).unwrap();
                let rhs = base + real_inner(&g, &(&n - &m));
                let scale = 1.0 + lhs.abs() + base.abs();
                assert!(lhs - rhs >= -1e-9 * scale, "{spec:?}: {lhs} < {rhs}");
            }
        }
    }

    #[test]
    fn unitary_invariance_and_ideal_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for spec in all_specs() {
            for _ in 0..200 {
                let m = random_gaussian(4, 4, &mut rng);
                let u = random_unitary(4, &mut rng);
                let v = random_unitary(4, &mut rng);
                let a = matrix_norm(&m, &spec).unwrap();
                let b = matrix_norm(&(&u * &m * &v), &spec).unwrap();
                assert!((a - b).abs() <= 1e-10 * a.max(1.0));
                let x = random_gaussian(4, 4, &mut rng);
                let y = random_gaussian(4, 4, &mut rng);
                let lhs = matrix_norm(&(&x * &m * &y), &spec).unwrap();
                let rhs = crate::linalg::opnorm(&x).unwrap() * a * crate::linalg::opnorm(&y).unwrap();
                assert!(lhs <= rhs + 1e-10 * rhs.max(1.0));
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let spec = NormSpec::weights(vec![0.1 + 0.2, 1e-300, 0.0]);
        // weights must be nonincreasing for validity, but serde is agnostic
        let s = serde_json::to_string(&spec).unwrap();
        let back: NormSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
        let parsed: NormSpec = serde_json::from_str(r#"{"kind":"lorentz_p1","p":2}"#).unwrap();
        assert_eq!(parsed, NormSpec::lorentz(2.0));
        assert!(serde_json::from_str::<NormSpec>(r#"{"kind":"lorentz","p":2}"#).is_err());
    }

    fn spec_strategy() -> impl Strategy<Value = NormSpec> {
        prop_oneof![
            (1.0f64..6.0).prop_map(NormSpec::schatten),
            (1.0f64..6.0).prop_map(NormSpec::lorentz),
            Just(NormSpec::macaev()),
        ]
    }

    proptest! {
        #[test]
        fn rearrangement_invariance(s in prop::collection::vec(0.0f64..10.0, 1..20), seed in any::<u64>(), spec in spec_strategy()) {
            let mut perm = s.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::seq::SliceRandom;
            perm.shuffle(&mut rng);
            prop_assert_eq!(vector_norm(&s, &spec).unwrap(), vector_norm(&perm, &spec).unwrap());
        }

        #[test]
        fn norm_axioms(s in prop::collection::vec(-10.0f64..10.0, 1..16), t in prop::collection::vec(-10.0f64..10.0, 16), c in -5.0f64..5.0, spec in spec_strategy()) {
            let t = &t[..s.len()];
            let ns = vector_norm(&s, &spec).unwrap();
            let scaled: Vec<f64> = s.iter().map(|x| c * x).collect();
            let scale = 1.0 + ns * c.abs();
            prop_assert!((vector_norm(&scaled, &spec).unwrap() - c.abs() * ns).abs() <= 1e-12 * scale);
            let sum: Vec<f64> = s.iter().zip(t).map(|(a, b)| a + b).collect();
            let nt = vector_norm(t, &spec).unwrap();
            prop_assert!(vector_norm(&sum, &spec).unwrap() <= ns + nt + 1e-12 * (1.0 + ns + nt));
        }

        #[test]
        fn schatten_dominated_by_lorentz(s in prop::collection::vec(0.0f64..10.0, 1..30), p in 1.0f64..8.0) {
            let a = vector_norm(&s, &NormSpec::schatten(p)).unwrap();
            let b = vector_norm(&s, &NormSpec::lorentz(p)).unwrap();
            prop_assert!(a <= b + 1e-12 * (1.0 + b));
        }
    }
}
