//! Solves along a family of growing truncations and extrapolates the limit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_condenser, SolveOptions};
use crate::error::Result;
use crate::operator::{Condenser, NormSpecs, OperatorTuple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    None,
    /// Least-squares fit of `c + a / x`.
    Richardson,
    /// Least-squares fit of `c + a x^e` with `e < 0`.
    PowerFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationFit {
    pub kind: Extrapolation,
    pub available: bool,
    pub limit: Option<f64>,
    pub exponent: Option<f64>,
    pub amplitude: Option<f64>,
    /// Root-mean-square residual of the fit.
    pub residual: Option<f64>,
    /// Slope of `log value` against `log scale`, when all values are positive.
    pub loglog_slope: Option<f64>,
    pub loglog_r2: Option<f64>,
    pub note: Option<String>,
}

impl ExtrapolationFit {
    fn unavailable(kind: Extrapolation, note: &str) -> Self {
        Self {
            kind,
            available: false,
            limit: None,
            exponent: None,
            amplitude: None,
            residual: None,
            loglog_slope: None,
            loglog_r2: None,
            note: Some(note.to_string()),
        }
    }
}

/// Least squares for `y ~ c + a * b` over the pairs; returns `(c, a, rms)`.
fn affine_fit(b: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = b.len() as f64;
    let mb = b.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sbb: f64 = b.iter().map(|v| (v - mb) * (v - mb)).sum();
    let sby: f64 = b.iter().zip(y).map(|(u, v)| (u - mb) * (v - my)).sum();
    let a = if sbb > 0.0 { sby / sbb } else { 0.0 };
    let c = my - a * mb;
    if !(a.is_finite() && c.is_finite()) {
        return None;
    }
    let rms = (b.iter().zip(y).map(|(u, v)| (c + a * u - v).powi(2)).sum::<f64>() / n).sqrt();
    Some((c, a, rms))
}

fn loglog(xs: &[f64], ys: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.len() < 2 || ys.iter().any(|&v| v <= 0.0) || xs.iter().any(|&v| v <= 0.0) {
        return (None, None);
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let Some((_, slope, _)) = affine_fit(&lx, &ly) else {
        return (None, None);
    };
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sst: f64 = ly.iter().map(|v| (v - my).powi(2)).sum();
    let (c, _, rms) = affine_fit(&lx, &ly).expect("fit succeeded above");
    let _ = c;
    let sse = rms * rms * ly.len() as f64;
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    (Some(slope), Some(r2))
}

/// Fits the chosen model to `(scale, value)` pairs.
pub fn extrapolate(xs: &[f64], ys: &[f64], kind: Extrapolation) -> ExtrapolationFit {
    let (slope, r2) = loglog(xs, ys);
    let mut fit = match kind {
        Extrapolation::None => match ys.last() {
            Some(&v) => ExtrapolationFit {
                kind,
                available: true,
                limit: Some(v),
                exponent: None,
                amplitude: None,
                residual: None,
                loglog_slope: None,
                loglog_r2: None,
                note: None,
            },
            None => ExtrapolationFit::unavailable(kind, "no data"),
        },
        _ if xs.len() < 3 || xs.len() != ys.len() => ExtrapolationFit::unavailable(kind, "needs at least 3 scales"),
        _ if xs.iter().any(|&x| !(x > 0.0)) => ExtrapolationFit::unavailable(kind, "scales must be positive"),
        Extrapolation::Richardson => {
            let b: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
            match affine_fit(&b, ys) {
                Some((c, a, rms)) => ExtrapolationFit {
                    kind,
                    available: true,
                    limit: Some(c),
                    exponent: Some(-1.0),
                    amplitude: Some(a),
                    residual: Some(rms),
                    loglog_slope: None,
                    loglog_r2: None,
                    note: None,
                },
                None => ExtrapolationFit::unavailable(kind, "fit failed"),
            }
        }
        Extrapolation::PowerFit => power_fit(xs, ys),
    };
    fit.loglog_slope = slope;
    fit.loglog_r2 = r2;
    fit
}

fn power_fit(xs: &[f64], ys: &[f64]) -> ExtrapolationFit {
    let kind = Extrapolation::PowerFit;
    let eval = |e: f64| -> Option<(f64, f64, f64)> {
        let b: Vec<f64> = xs.iter().map(|x| x.powf(e)).collect();
        affine_fit(&b, ys)
    };
    // grid over the exponent, then golden-section refinement
    let grid: Vec<f64> = (0..=240).map(|i| -(10f64.powf(-3.0 + 4.0 * i as f64 / 240.0))).collect();
    let mut best: Option<(f64, f64)> = None;
    for &e in &grid {
        if let Some((_, _, r)) = eval(e) {
            if best.is_none_or(|(_, br)| r < br) {
                best = Some((e, r));
            }
        }
    }
    let Some((e0, _)) = best else {
        return ExtrapolationFit::unavailable(kind, "fit failed");
    };
    let ratio = 10f64.powf(4.0 / 240.0);
    let (mut lo, mut hi) = (e0 * ratio, e0 / ratio);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let resid = |e: f64| eval(e).map_or(f64::INFINITY, |t| t.2);
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if resid(m1) <= resid(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let e = 0.5 * (lo + hi);
    let e = if resid(e) <= resid(e0) { e } else { e0 };
    match eval(e) {
        Some((c, a, rms)) => ExtrapolationFit {
            kind,
            available: true,
            limit: Some(c),
            exponent: Some(e),
            amplitude: Some(a),
            residual: Some(rms),
            loglog_slope: None,
            loglog_r2: None,
            note: None,
        },
        None => ExtrapolationFit::unavailable(kind, "fit failed"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub scale: usize,
    pub dim: usize,
    pub value: f64,
    pub converged: bool,
    pub restart_spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub fit: ExtrapolationFit,
}

/// Solves `k_J` for `generator(scale)` at each scale (in parallel, merged by
/// index) and extrapolates along the scales.
pub fn scale_sweep<G>(
    scales: &[usize],
    generator: G,
    specs: &NormSpecs,
    opts: &SolveOptions,
    extrapolation: Extrapolation,
) -> Result<SweepReport>
where
    G: Fn(usize) -> Result<(OperatorTuple, Condenser)> + Sync,
{
    let results: Vec<Result<SweepPoint>> = scales
        .par_iter()
        .map(|&s| {
            let (tuple, cond) = generator(s)?;
            let r = solve_condenser(&tuple, &cond, specs, opts)?;
            Ok(SweepPoint {
                scale: s,
                dim: tuple.dim(),
                value: r.value,
                converged: r.converged,
                restart_spread: r.restart_spread(),
            })
        })
        .collect();
    let points = results.into_iter().collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.scale as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.value).collect();
    Ok(SweepReport { fit: extrapolate(&xs, &ys, extrapolation), points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_family() {
        let xs = [4.0, 8.0, 16.0, 32.0];
        let ys = [0.7; 4];
        for kind in [Extrapolation::None, Extrapolation::Richardson, Extrapolation::PowerFit] {
            let f = extrapolate(&xs, &ys, kind);
            assert!((f.limit.unwrap() - 0.7).abs() < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn richardson_exact_on_model() {
        let xs = [10.0, 20.0, 40.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.25 + 3.0 / x).collect();
        let f = extrapolate(&xs, &ys, Extrapolation::Richardson);
        assert!((f.limit.unwrap() - 1.25).abs() < 1e-8);
    }

    #[test]
    fn power_fit_recovers_exponent() {
        let xs = [8.0, 16.0, 32.0, 64.0, 128.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 0.3 + 2.0 * x.powf(-0.7)).collect();
        let f = extrapolate(&xs, &ys, Extrapolation::PowerFit);
        assert!((f.exponent.unwrap() + 0.7).abs() < 1e-4, "{f:?}");
        assert!((f.limit.unwrap() - 0.3).abs() < 1e-5);
    }

    #[test]
    fn too_few_scales() {
        let f = extrapolate(&[1.0, 2.0], &[1.0, 0.5], Extrapolation::PowerFit);
        assert!(!f.available);
        assert!((f.loglog_slope.unwrap() + 1.0).abs() < 1e-12);
    }
}
