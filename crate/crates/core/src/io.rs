//! CSV series (RFC 4180, LF line endings, 17 significant digits) and
//! deterministic JSON output.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::cayley::ScanRow;
use crate::error::Result;
use crate::solver::{HistoryRow, SweepPoint};

pub const HISTORY_HEADER: [&str; 3] = ["iter", "objective", "step"];
pub const SCAN_HEADER: [&str; 4] = ["R", "n_vertices", "value", "converged"];
pub const SERIES_HEADER: [&str; 4] = ["scale", "value", "converged", "extrapolated"];

/// `{:.16e}` for finite values, `NaN`, `inf`, `-inf` otherwise.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Header line plus one line per row, each terminated by `\n`.
pub fn to_csv<S: AsRef<str>>(header: &[&str], rows: &[Vec<S>]) -> String {
    let mut out = String::new();
    let line = |cells: Vec<String>| cells.join(",");
    out.push_str(&line(header.iter().map(|h| field(h)).collect()));
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", line(r.iter().map(|c| field(c.as_ref())).collect()));
    }
    out
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let body: Vec<Vec<String>> =
        rows.iter().map(|r| vec![r.iter.to_string(), fmt_f64(r.objective), fmt_f64(r.step)]).collect();
    to_csv(&HISTORY_HEADER, &body)
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.radius.to_string(), r.n_vertices.to_string(), fmt_f64(r.value), r.converged.to_string()])
        .collect();
    to_csv(&SCAN_HEADER, &body)
}

/// The `extrapolated` column carries the fitted limit (empty when none).
pub fn series_csv(points: &[SweepPoint], limit: Option<f64>) -> String {
    let lim = limit.map(fmt_f64).unwrap_or_default();
    let body: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![p.scale.to_string(), fmt_f64(p.value), p.converged.to_string(), lim.clone()])
        .collect();
    to_csv(&SERIES_HEADER, &body)
}

/// Pretty JSON with a trailing newline. Floats use the shortest
/// representation that round-trips exactly.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history_is_header_only() {
        assert_eq!(history_csv(&[]), "iter,objective,step\n");
    }

    #[test]
    fn three_point_scan_has_four_lines() {
        let rows: Vec<ScanRow> = (1..=3)
            .map(|r| ScanRow { radius: r, n_vertices: 2 * r + 1, value: 1.0 / r as f64, converged: true })
            .collect();
        let s = scan_csv(&rows);
        assert_eq!(s.lines().count(), 4);
        assert!(s.starts_with("R,n_vertices,value,converged\n"));
        assert!(!s.contains('\r'));
    }

    #[test]
    fn values_round_trip() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-300, 2.0f64.sqrt() * 1e200, -0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn quoting() {
        let s = to_csv(&["a", "b"], &[vec!["x,y", "say \"hi\""]]);
        assert_eq!(s, "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n");
    }
}
