//! Ledger CSV files, JSON summaries, rate fits and SVG plots.
//!
//! Ledger CSV columns, one row per computed iterate, in this order:
//! `level, k, i, is_final_i, is_final_k, dofs, n_triangles, eta, energy,
//! norm, norm_update, distance_from_start, start_energy, cost, seconds,
//! exact_error`. Booleans are written as
//! `true`/`false`; a missing exact error is an empty field.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::Serialize;
use serde_json::json;

use crate::adaptive::{AdaptiveParams, IterateRecord, RunLedger};
use crate::error::Result;
use crate::linsolve::Preconditioner;

pub fn write_ledger_csv<W: Write>(writer: W, records: &[IterateRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ledger_csv<R: Read>(reader: R) -> Result<Vec<IterateRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Least-squares slope of `log y` against `log x` over the last decade of
/// `x`, i.e. the points with `x ≥ max(x) / 10`. Non-positive values are
/// skipped. `None` when fewer than two distinct points remain.
pub fn fit_rate(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let xmax = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let tail: Vec<(f64, f64)> = pts.into_iter().filter(|p| p.0 >= xmax - 10f64.ln() - 1e-12).collect();
    least_squares_slope(&tail)
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Fitted slopes on the final iterates `(ℓ, k̲, i̲)` of each level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rates {
    pub eta_vs_dofs: Option<f64>,
    pub eta_vs_cost: Option<f64>,
    pub eta_vs_seconds: Option<f64>,
    pub error_vs_cost: Option<f64>,
}

pub fn fit_rates(records: &[IterateRecord]) -> Rates {
    let fin: Vec<&IterateRecord> = records.iter().filter(|r| r.is_final_k).collect();
    let col = |f: &dyn Fn(&IterateRecord) -> f64| fin.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let eta = col(&|r| r.eta);
    let errors: Vec<(f64, f64)> =
        fin.iter().filter_map(|r| r.exact_error.map(|e| (r.cost as f64, e))).collect();
    Rates {
        eta_vs_dofs: fit_rate(&col(&|r| r.dofs as f64), &eta),
        eta_vs_cost: fit_rate(&col(&|r| r.cost as f64), &eta),
        eta_vs_seconds: fit_rate(&col(&|r| r.seconds), &eta),
        error_vs_cost: fit_rate(
            &errors.iter().map(|p| p.0).collect::<Vec<_>>(),
            &errors.iter().map(|p| p.1).collect::<Vec<_>>(),
        ),
    }
}

pub fn params_json(p: &AdaptiveParams) -> serde_json::Value {
    let finite = |v: f64| if v.is_finite() { json!(v) } else { json!(null) };
    json!({
        "degree": p.degree,
        "theta": p.theta,
        "lambda_lin": p.lambda_lin,
        "lambda_alg": p.lambda_alg,
        "delta": p.delta,
        "i_min": p.i_min,
        "energy_relax_tol": p.energy_relax_tol,
        "norm_cap": finite(p.norm_cap),
        "tol": p.stop_estimator_tol,
        "max_levels": p.max_levels,
        "max_cost": p.max_cost,
        "max_dofs": p.max_dofs,
        "max_seconds": p.max_seconds,
        "max_inner_iterations": p.max_inner_iterations,
        "max_outer_iterations": p.max_outer_iterations,
        "solver": {
            "kind": p.solver.kind.name(),
            "pre_sweeps": p.solver.pre_sweeps,
            "post_sweeps": p.solver.post_sweeps,
            "relaxation": p.solver.relaxation,
            "preconditioner": match p.solver.preconditioner {
                Preconditioner::Jacobi => "jacobi",
                Preconditioner::None => "none",
            },
        },
    })
}

pub fn summary_json(ledger: &RunLedger) -> serde_json::Value {
    let last = ledger.final_record();
    let rates = fit_rates(&ledger.records);
    json!({
        "problem": ledger.problem,
        "params": params_json(&ledger.params),
        "solver": ledger.solver_kind.name(),
        "termination": ledger.termination.label(),
        "levels": ledger.levels.len(),
        "records": ledger.records.len(),
        "final_eta": last.map(|r| r.eta),
        "final_exact_error": last.and_then(|r| r.exact_error),
        "final_dofs": last.map(|r| r.dofs),
        "final_triangles": last.map(|r| r.n_triangles),
        "final_cost": last.map(|r| r.cost),
        "seconds": last.map(|r| r.seconds),
        "rates": rates,
        "contraction": {
            "algebraic": ledger.algebraic_contraction_estimate(),
            "linearization": ledger.linearization_contraction_estimate(),
        },
        "max_norm": ledger.max_norm(),
    })
}

/// Log-log plot of `η` (circles) and the exact error (diamonds) of the
/// final iterates against cost.
pub fn svg_plot(records: &[IterateRecord]) -> String {
    let (w, h, m) = (640.0, 480.0, 60.0);
    let fin: Vec<&IterateRecord> = records.iter().filter(|r| r.is_final_k && r.cost > 0).collect();
    let mut pts: Vec<(f64, f64)> = fin.iter().filter(|r| r.eta > 0.0).map(|r| (r.cost as f64, r.eta)).collect();
    let errs: Vec<(f64, f64)> =
        fin.iter().filter_map(|r| r.exact_error.filter(|e| *e > 0.0).map(|e| (r.cost as f64, e))).collect();
    pts.extend(&errs);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if pts.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let lx = |v: f64| v.log10();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(lx(x).floor());
        x1 = x1.max(lx(x).ceil());
        y0 = y0.min(lx(y).floor());
        y1 = y1.max(lx(y).ceil());
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (lx(x) - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (lx(y) - y0) / (y1 - y0) * (h - 2.0 * m);
    let _ = writeln!(
        out,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    for d in x0 as i32..=x1 as i32 {
        let x = sx(10f64.powi(d));
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" font-size="12" text-anchor="middle">1e{d}</text>"#, h - m + 18.0);
    }
    for d in y0 as i32..=y1 as i32 {
        let y = sy(10f64.powi(d));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}" font-size="12" text-anchor="end">1e{d}</text>"#, m - 6.0);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">cost</text>"#, w / 2.0, h - 15.0);
    let series = |out: &mut String, data: &[(f64, f64)], color: &str, diamond: bool| {
        let path: Vec<String> = data.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, path.join(" "));
        for &(x, y) in data {
            let (cx, cy) = (sx(x), sy(y));
            if diamond {
                let _ = writeln!(
                    out,
                    r#"<path d="M{cx:.1},{:.1} L{:.1},{cy:.1} L{cx:.1},{:.1} L{:.1},{cy:.1} Z" fill="{color}"/>"#,
                    cy - 4.0,
                    cx + 4.0,
                    cy + 4.0,
                    cx - 4.0
                );
            } else {
                let _ = writeln!(out, r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="3" fill="{color}"/>"#);
            }
        }
    };
    let etas: Vec<(f64, f64)> = fin.iter().filter(|r| r.eta > 0.0).map(|r| (r.cost as f64, r.eta)).collect();
    series(&mut out, &etas, "#1f77b4", false);
    if !errs.is_empty() {
        series(&mut out, &errs, "#d62728", true);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_power_law_slope() {
        let xs: Vec<f64> = (0..40).map(|k| 10f64.powf(2.0 + 0.1 * k as f64)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-0.5)).collect();
        let s = fit_rate(&xs, &ys).unwrap();
        assert!((s + 0.5).abs() < 1e-10);
    }

    #[test]
    fn fit_uses_last_decade_only() {
        let xs = [1.0, 10.0, 100.0, 200.0, 1000.0];
        let ys = [1.0, 1.0, 1.0, 0.5, 0.1];
        let tail = [(100f64.ln(), 1f64.ln()), (200f64.ln(), 0.5f64.ln()), (1000f64.ln(), 0.1f64.ln())];
        assert_eq!(fit_rate(&xs, &ys), least_squares_slope(&tail));
        assert_eq!(fit_rate(&[1.0], &[1.0]), None);
    }
}
