//! Self-contained SVG charts for quick visual checks.

use std::fmt::Write as _;

const BAR_W: f64 = 6.0;
const GROUP_GAP: f64 = 10.0;
const PLOT_H: f64 = 220.0;
const MARGIN: f64 = 50.0;
const OUTCOME_LABELS: [&str; 4] = ["++", "+-", "-+", "--"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One condition's target and model outcome tables.
pub struct BarGroup {
    pub label: String,
    pub target: [f64; 4],
    pub model: Option<[f64; 4]>,
}

/// Grouped bars: per condition, target (grey) and, when present, model
/// (blue) for each outcome.
pub fn probability_bars(title: &str, header: &str, groups: &[BarGroup]) -> String {
    let group_w = 8.0 * BAR_W + GROUP_GAP;
    let width = 2.0 * MARGIN + group_w * groups.len().max(1) as f64;
    let height = PLOT_H + 2.0 * MARGIN + 20.0;
    let y0 = MARGIN + PLOT_H;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(svg, "<!--\n{}-->", escape(header).replace("--", "- -"));
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="20" font-size="14">{}</text>"#, escape(title));
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = y0 - tick * PLOT_H;
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{tick}</text>"##,
            width - MARGIN,
            MARGIN - 4.0,
            y + 3.0
        );
    }
    for (g, group) in groups.iter().enumerate() {
        let gx = MARGIN + g as f64 * group_w + GROUP_GAP / 2.0;
        for k in 0..4 {
            let bars = std::iter::once((group.target[k], "#999")).chain(group.model.map(|m| (m[k], "#3366cc")));
            for (s, (p, colour)) in bars.enumerate() {
                let x = gx + (2 * k + s) as f64 * BAR_W;
                let h = p.clamp(0.0, 1.0) * PLOT_H;
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x}" y="{}" width="{}" height="{h}" fill="{colour}"><title>{} {} {}</title></rect>"#,
                    y0 - h,
                    BAR_W - 1.0,
                    escape(&group.label),
                    OUTCOME_LABELS[k],
                    if s == 0 { format!("target {p:.4}") } else { format!("model {p:.4}") }
                );
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" transform="rotate(-60 {} {})">{}</text>"#,
            gx + 4.0 * BAR_W,
            y0 + 12.0,
            gx + 4.0 * BAR_W,
            y0 + 12.0,
            escape(&group.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Polyline of `(x, y)` points with a second optional series on the same axes.
/// Name, stroke colour and `(x, y)` points.
pub type Series<'a> = (&'a str, &'a str, Vec<(f64, f64)>);

pub fn line_chart(title: &str, header: &str, x_label: &str, series: &[Series<'_>]) -> String {
    let width = 520.0;
    let height = PLOT_H + 2.0 * MARGIN;
    let pts = series.iter().flat_map(|s| s.2.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if x_hi.is_nan() || x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    if y_hi.is_nan() || y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (width - 2.0 * MARGIN);
    let sy = |y: f64| MARGIN + PLOT_H - (y - y_lo) / (y_hi - y_lo) * PLOT_H;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(svg, "<!--\n{}-->", escape(header).replace("--", "- -"));
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="20" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        width / 2.0,
        height - 10.0,
        escape(x_label)
    );
    for (x, anchor) in [(x_lo, "start"), (x_hi, "end")] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="{anchor}">{x:.3}</text>"#,
            sx(x),
            MARGIN + PLOT_H + 14.0
        );
    }
    for y in [y_lo, y_hi] {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{y:.3}</text>"#, MARGIN - 4.0, sy(y) + 3.0);
    }
    for (i, (name, colour, points)) in series.iter().enumerate() {
        let path: Vec<String> = points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
            width - MARGIN - 80.0,
            MARGIN + 12.0 * i as f64,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
