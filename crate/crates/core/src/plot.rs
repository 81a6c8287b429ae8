//! Self-rendered SVG 1.1 plots of phase-transition results.
//!
//! Output is a pure function of the result list: coordinates are printed with
//! a fixed number of decimals and series are emitted in solver order, so
//! re-rendering the same results yields identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::bench::{median_error, success_probability, SolverId, TrialResult};
use crate::error::{invalid, DemixError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Success probability versus sample count.
    Success,
    /// Median normalized error versus sample count (log scale).
    Error,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];
const ERROR_FLOOR: f64 = 1e-16;

struct Series {
    solver: SolverId,
    points: Vec<(usize, f64)>,
}

fn solvers_in(results: &[TrialResult]) -> Vec<SolverId> {
    let mut s: Vec<SolverId> = results.iter().map(|r| r.solver).collect();
    s.sort();
    s.dedup();
    s
}

fn grid_in(results: &[TrialResult]) -> Vec<usize> {
    let mut g: Vec<usize> = results.iter().map(|r| r.n).collect();
    g.sort_unstable();
    g.dedup();
    g
}

fn collect(results: &[TrialResult], kind: PlotKind, threshold: f64) -> Result<Vec<Series>> {
    let grid = grid_in(results);
    solvers_in(results)
        .into_iter()
        .map(|solver| {
            let mut points = Vec::new();
            for &n in &grid {
                if !results.iter().any(|r| r.solver == solver && r.n == n) {
                    continue;
                }
                let y = match kind {
                    PlotKind::Success => success_probability(results, solver, n, threshold)?,
                    PlotKind::Error => median_error(results, solver, n)?,
                };
                points.push((n, y));
            }
            Ok(Series { solver, points })
        })
        .collect()
}

/// Maps data coordinates to pixel coordinates.
struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn px(&self, n: usize) -> f64 {
        let x = (n as f64).log10();
        let span = (self.x_hi - self.x_lo).max(1e-12);
        LEFT + (x - self.x_lo) / span * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.y_hi - self.y_lo).max(1e-12);
        let t = ((y - self.y_lo) / span).clamp(0.0, 1.0);
        HEIGHT - BOTTOM - t * (HEIGHT - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the plot as an SVG document.
pub fn render_svg(results: &[TrialResult], kind: PlotKind, threshold: f64) -> Result<String> {
    if results.is_empty() {
        return Err(invalid("no results to plot"));
    }
    let series = collect(results, kind, threshold)?;
    let grid = grid_in(results);
    let (first, last) = (grid[0], grid[grid.len() - 1]);

    // Error plots use log10 of the median, with non-finite or tiny values
    // pinned to the axis limits.
    let transform = |y: f64| match kind {
        PlotKind::Success => y,
        PlotKind::Error => {
            if y.is_finite() {
                y.max(ERROR_FLOOR).log10()
            } else {
                f64::INFINITY
            }
        }
    };
    let (y_lo, y_hi) = match kind {
        PlotKind::Success => (0.0, 1.0),
        PlotKind::Error => {
            let finite: Vec<f64> = series
                .iter()
                .flat_map(|s| s.points.iter().map(|&(_, y)| transform(y)))
                .filter(|v| v.is_finite())
                .collect();
            let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo.is_finite() {
                (lo.floor(), hi.ceil().max(lo.floor() + 1.0))
            } else {
                (-1.0, 0.0)
            }
        }
    };
    let frame = Frame {
        x_lo: (first as f64).log10(),
        x_hi: (last as f64).log10(),
        y_lo,
        y_hi,
    };

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(w, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let title = match kind {
        PlotKind::Success => format!("Success probability (normalized error &lt; {threshold})"),
        PlotKind::Error => "Median normalized error".to_string(),
    };
    let _ = writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{title}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0
    );

    // Axes.
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        w,
        r#"<path d="M {x0:.2} {y1:.2} L {x0:.2} {y0:.2} L {x1:.2} {y0:.2}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for &n in &grid {
        let x = frame.px(n);
        let _ = writeln!(
            w,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{n}</text>"#,
            y0 + 18.0
        );
    }
    let y_ticks: Vec<(f64, String)> = match kind {
        PlotKind::Success => (0..=5).map(|i| (i as f64 * 0.2, format!("{:.1}", i as f64 * 0.2))).collect(),
        PlotKind::Error => {
            let (lo, hi) = (y_lo as i32, y_hi as i32);
            (lo..=hi).map(|e| (e as f64, format!("1e{e}"))).collect()
        }
    };
    for (v, label) in &y_ticks {
        let y = frame.py(*v);
        let _ = writeln!(
            w,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black" stroke-width="1"/>"#,
            x0 - 5.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{label}</text>"#,
            x0 - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">number of samples n</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 18.0
    );
    let y_label = match kind {
        PlotKind::Success => "success probability",
        PlotKind::Error => "median normalized error",
    };
    let (lx, ly) = (20.0, (y0 + y1) / 2.0);
    let _ = writeln!(
        w,
        r#"<text x="{lx:.2}" y="{ly:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{y_label}</text>"#
    );

    // One polyline per solver, plus markers and a legend entry.
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(n, y)| {
                let t = transform(y);
                let py = if t.is_finite() { frame.py(t) } else { frame.py(frame.y_hi) };
                format!("{:.2},{:.2}", frame.px(n), py)
            })
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(w, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            w,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 25.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 32.0,
            ly + 4.0,
            escape(s.solver.name())
        );
    }
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}

/// Writes [`render_svg`] output to `path`.
pub fn emit_svg(results: &[TrialResult], path: &Path, kind: PlotKind, threshold: f64) -> Result<()> {
    let svg = render_svg(results, kind, threshold)?;
    std::fs::write(path, svg).map_err(|e| DemixError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<TrialResult> {
        let mut r = Vec::new();
        for (si, solver) in SolverId::ALL.into_iter().enumerate() {
            for n in [20, 40, 80] {
                for trial in 0..4 {
                    let e = if si == 2 { f64::INFINITY } else { 1.0 / (n * (trial + 1)) as f64 };
                    r.push(TrialResult {
                        solver,
                        n,
                        trial,
                        normalized_error: e,
                        err_theta1: e,
                        err_theta2: e,
                        iterations: 3,
                        wall_ms: 0.0,
                    });
                }
            }
        }
        r
    }

    #[test]
    fn one_polyline_per_solver_and_legend() {
        for kind in [PlotKind::Success, PlotKind::Error] {
            let svg = render_svg(&sample(), kind, 0.05).unwrap();
            assert_eq!(svg.matches("<polyline").count(), 3);
            for s in SolverId::ALL {
                assert!(svg.contains(&format!(">{}</text>", s.name())));
            }
            assert!(svg.contains("number of samples n"));
            assert!(!svg.contains("NaN") && !svg.contains("inf"));
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = render_svg(&sample(), PlotKind::Error, 0.05).unwrap();
        let b = render_svg(&sample(), PlotKind::Error, 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_results_rejected() {
        assert!(render_svg(&[], PlotKind::Success, 0.05).is_err());
    }
}
