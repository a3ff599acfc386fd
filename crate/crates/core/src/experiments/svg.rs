//! Minimal SVG writers for the experiment reports.

use std::fmt::Write;

use super::moons::MoonsReport;
use super::rate::RateReport;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 50.0;
const CLASS_FILL: [&str; 2] = ["#cfe0f3", "#f8dcc4"];
const CLASS_INK: [&str; 2] = ["#1f5fa8", "#c45a00"];
const HIGHLIGHT_FILL: &str = "#7d7d7d";

fn header(out: &mut String, width: f64, height: f64, timestamp: Option<&str>) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    if let Some(ts) = timestamp {
        let _ = writeln!(out, "<metadata>generated {ts}</metadata>");
    }
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
}

/// Decision regions of the analysed moons run. Grid rows are drawn as
/// run-length rectangles; highlighted cells are shaded darker, hyperplanes
/// dashed and training points circled in their class colour.
pub fn decision_grid_svg(report: &MoonsReport, timestamp: Option<&str>) -> Option<String> {
    let cells = report.cells.as_ref()?;
    let b = &cells.bounds;
    let r = b.resolution;
    let px = SIZE / r as f64;
    let mut out = String::new();
    header(&mut out, SIZE, SIZE, timestamp);
    let _ = writeln!(out, r#"<clipPath id="frame"><rect width="{SIZE}" height="{SIZE}"/></clipPath>"#);
    let _ = writeln!(out, r#"<g shape-rendering="crispEdges">"#);
    for iy in 0..r {
        let y = SIZE - (iy + 1) as f64 * px;
        let mut ix = 0;
        while ix < r {
            let c = cells.grid_cells[iy * r + ix] as usize;
            let cell = &cells.cells[c];
            let fill = if cell.highlighted { HIGHLIGHT_FILL } else { CLASS_FILL[cell.label.min(1)] };
            let start = ix;
            while ix < r {
                let c2 = &cells.cells[cells.grid_cells[iy * r + ix] as usize];
                let f2 = if c2.highlighted { HIGHLIGHT_FILL } else { CLASS_FILL[c2.label.min(1)] };
                if f2 != fill {
                    break;
                }
                ix += 1;
            }
            let _ = writeln!(
                out,
                r#"<rect x="{:.3}" y="{y:.3}" width="{:.3}" height="{px:.3}" fill="{fill}"/>"#,
                start as f64 * px,
                (ix - start) as f64 * px
            );
        }
    }
    let _ = writeln!(out, "</g>");
    let sx = |x: f64| (x - b.x_min) / (b.x_max - b.x_min) * SIZE;
    let sy = |y: f64| SIZE - (y - b.y_min) / (b.y_max - b.y_min) * SIZE;
    let _ = writeln!(out, r##"<g clip-path="url(#frame)" stroke="#333" stroke-width="1" stroke-dasharray="4 3">"##);
    for (w, off) in &report.hyperplanes {
        // w·x + b = 0, drawn between two far points on the line.
        let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
        if norm == 0.0 {
            continue;
        }
        let (ux, uy) = (w[0] / norm, w[1] / norm);
        let (cx, cy) = (-off * ux / norm, -off * uy / norm);
        let span = 10.0 * ((b.x_max - b.x_min) + (b.y_max - b.y_min));
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
            sx(cx - uy * span),
            sy(cy + ux * span),
            sx(cx + uy * span),
            sy(cy - ux * span)
        );
    }
    let _ = writeln!(out, "</g>");
    for (p, &l) in report.train_points.iter().zip(&report.train_labels) {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" stroke="white" stroke-width="0.5"/>"#,
            sx(p[0]),
            sy(p[1]),
            CLASS_INK[l.min(1)]
        );
    }
    let _ = writeln!(out, "</svg>");
    Some(out)
}

/// Log-log excess risk against n with ±2 SE bars, the fitted line and a
/// reference line of the target slope through the first point.
pub fn rate_curve_svg(report: &RateReport, timestamp: Option<&str>) -> String {
    let pts = &report.points;
    let lx: Vec<f64> = pts.iter().map(|p| (p.n as f64).log10()).collect();
    let lo_y = |p: &super::rate::RatePoint| (p.mean_excess - 2.0 * p.se_excess).max(p.mean_excess * 0.1).log10();
    let hi_y = |p: &super::rate::RatePoint| (p.mean_excess + 2.0 * p.se_excess).log10();
    let (x0, x1) = (lx[0] - 0.1, lx[lx.len() - 1] + 0.1);
    let y0 = pts.iter().map(lo_y).fold(f64::INFINITY, f64::min) - 0.1;
    let y1 = pts.iter().map(hi_y).fold(f64::NEG_INFINITY, f64::max) + 0.1;
    let plot = SIZE - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * plot;
    let sy = |y: f64| SIZE - MARGIN - (y - y0) / (y1 - y0) * plot;
    let mut out = String::new();
    header(&mut out, SIZE, SIZE, timestamp);
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{plot}" height="{plot}" fill="none" stroke="#999"/>"##
    );
    let fit = |x: f64| (report.slope * x * std::f64::consts::LN_10 + report.intercept) / std::f64::consts::LN_10;
    let _ = writeln!(
        out,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#1f5fa8" stroke-width="1.5"/>"##,
        sx(x0),
        sy(fit(x0)),
        sx(x1),
        sy(fit(x1))
    );
    let ref_line = |x: f64| pts[0].mean_excess.log10() + report.target_slope * (x - lx[0]);
    let _ = writeln!(
        out,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c45a00" stroke-dasharray="5 4"/>"##,
        sx(x0),
        sy(ref_line(x0)),
        sx(x1),
        sy(ref_line(x1))
    );
    for (p, &x) in pts.iter().zip(&lx) {
        let _ = writeln!(
            out,
            r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#333"/>"##,
            sx(x),
            sy(lo_y(p)),
            sy(hi_y(p))
        );
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="#333"/>"##,
            sx(x),
            sy(p.mean_excess.log10())
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            sx(x),
            SIZE - MARGIN + 16.0,
            p.n
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{:.0}" font-size="13">log-log slope {:.3} (target {:.3})</text>"#,
        MARGIN - 15.0,
        report.slope,
        report.target_slope
    );
    let _ = writeln!(out, "</svg>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::rate::RatePoint;
    use crate::experiments::{RateConfig, RATE_NOTE};

    #[test]
    fn rate_plot_is_well_formed() {
        let points: Vec<RatePoint> = [(256, 0.04), (1024, 0.02), (4096, 0.01)]
            .iter()
            .map(|&(n, e)| RatePoint {
                n,
                k_tilde: 2,
                hyperplanes: 1,
                mean_excess: e,
                se_excess: e / 10.0,
                max_mc_se: 0.0,
                excess: vec![e],
            })
            .collect();
        let report = RateReport {
            note: RATE_NOTE.into(),
            config: RateConfig::default(),
            bayes_risk: 0.2,
            points,
            slope: -0.5,
            intercept: -0.5,
            target_slope: -1.0 / 3.0,
            monotone: true,
            monotone_violations: vec![],
        };
        let svg = rate_curve_svg(&report, None);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(!svg.contains("<metadata>"));
        assert!(rate_curve_svg(&report, Some("t")).contains("<metadata>generated t</metadata>"));
    }
}
