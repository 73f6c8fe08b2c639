//! Emission of analysis products as CSV and JSON.
//!
//! CSV numbers use 17-significant-digit scientific notation so downstream
//! plotting never re-quantises; files are written to a temporary name and
//! renamed into place so readers never observe partial output.

use std::fmt::Write as _;
use std::path::Path;

use crate::continuation::{BifurcationCurve, PhaseDiagram};
use crate::equilibrium::EquilibriumCurve;
use crate::error::{Error, Result};
use crate::sim::CycleStats;
use crate::stability::{ContourField, Eigenvalue, HopfPoint, StabilityLabel};

/// Render with 17 significant digits, enough to round-trip any f64.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `content` atomically: to `<path>.tmp` in the same directory, then
/// rename over the destination.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".to_string(),
    });
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        Error::Io(format!(
            "rename {} -> {}: {e}",
            tmp.display(),
            path.display()
        ))
    })
}

fn label_flag(label: Option<&StabilityLabel>) -> i8 {
    match label {
        Some(StabilityLabel::Stable) => 1,
        Some(StabilityLabel::Saddle) => 0,
        Some(StabilityLabel::Oscillatory) => -1,
        None => 0,
    }
}

/// Equilibrium curve CSV: `s,q1,q_c,phi_a,phi_b,phi_c,res_a,res_b,res_c,
/// stable_flag,fold_flag`. The stability column is 1 stable, 0 saddle or
/// unknown, -1 oscillatory.
pub fn curve_csv(curve: &EquilibriumCurve, labels: Option<&[StabilityLabel]>) -> String {
    let mut s = String::with_capacity(curve.points.len() * 200);
    s.push_str("s,q1,q_c,phi_a,phi_b,phi_c,res_a,res_b,res_c,stable_flag,fold_flag\n");
    for (i, p) in curve.points.iter().enumerate() {
        let st = &p.state;
        let fold = curve.fold_indices.contains(&i) as i8;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt_full(p.s),
            fmt_full(p.q1),
            fmt_full(st.q_c),
            fmt_full(st.phi_a),
            fmt_full(st.phi_b),
            fmt_full(st.phi_c),
            fmt_full(st.res_a),
            fmt_full(st.res_b),
            fmt_full(st.res_c),
            label_flag(labels.and_then(|l| l.get(i))),
            fold,
        );
    }
    s
}

/// Contour field CSV: `sigma,omega,re,im` rows in row-major omega order.
pub fn contour_csv(field: &ContourField) -> String {
    contour_csv_labeled(field, "sigma")
}

/// Curve-scan contour CSV with arclength on the first column:
/// `s,omega,re,im`.
pub fn scan_contour_csv(field: &ContourField) -> String {
    contour_csv_labeled(field, "s")
}

fn contour_csv_labeled(field: &ContourField, x_label: &str) -> String {
    let mut s = String::with_capacity(field.re.len() * 80);
    let _ = writeln!(s, "{x_label},omega,re,im");
    for (iw, w) in field.omegas.iter().enumerate() {
        for (is, sg) in field.sigmas.iter().enumerate() {
            let (re, im) = field.at(iw, is);
            let _ = writeln!(
                s,
                "{},{},{},{}",
                fmt_full(*sg),
                fmt_full(*w),
                fmt_full(re),
                fmt_full(im)
            );
        }
    }
    s
}

/// Time-series CSV: `t,q_c`.
pub fn series_csv(times: &[f64], q_c: &[f64]) -> String {
    let mut s = String::with_capacity(times.len() * 50);
    s.push_str("t,q_c\n");
    for (t, q) in times.iter().zip(q_c) {
        let _ = writeln!(s, "{},{}", fmt_full(*t), fmt_full(*q));
    }
    s
}

/// Profile snapshot CSV: `x,phi_a,phi_b,phi_c`.
pub fn profiles_csv(x: &[f64], a: &[f64], b: &[f64], c: &[f64]) -> String {
    let mut s = String::with_capacity(x.len() * 90);
    s.push_str("x,phi_a,phi_b,phi_c\n");
    for i in 0..x.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_full(x[i]),
            fmt_full(a[i]),
            fmt_full(b[i]),
            fmt_full(c[i])
        );
    }
    s
}

/// Phase-diagram raster CSV: `q1,contrast,region` with empty region for
/// unclassified cells.
pub fn phase_diagram_csv(pd: &PhaseDiagram) -> String {
    let mut s = String::with_capacity(pd.labels.len() * 60);
    s.push_str("q1,contrast,region\n");
    for (k, label) in pd.labels.iter().enumerate() {
        let (i, j) = (k / pd.contrasts.len(), k % pd.contrasts.len());
        let name = label.map(|r| r.numeral()).unwrap_or("");
        let _ = writeln!(
            s,
            "{},{},{}",
            fmt_full(pd.q1s[i]),
            fmt_full(pd.contrasts[j]),
            name
        );
    }
    s
}

pub fn eigenvalues_json(eigs: &[Eigenvalue]) -> Result<String> {
    serde_json::to_string_pretty(eigs).map_err(|e| Error::Io(e.to_string()))
}

pub fn hopf_points_json(points: &[HopfPoint]) -> Result<String> {
    serde_json::to_string_pretty(points).map_err(|e| Error::Io(e.to_string()))
}

pub fn bifurcation_curve_json(curve: &BifurcationCurve) -> Result<String> {
    serde_json::to_string_pretty(curve).map_err(|e| Error::Io(e.to_string()))
}

pub fn cycle_stats_json(stats: &CycleStats) -> Result<String> {
    serde_json::to_string_pretty(stats).map_err(|e| Error::Io(e.to_string()))
}
