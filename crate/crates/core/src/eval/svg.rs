//! Hand-written SVG scatter plots for boundary exports.
//!
//! Class colors (index mod 12):
//!
//! | class | color   | class | color   |
//! |-------|---------|-------|---------|
//! | 0     | #1f77b4 | 6     | #e377c2 |
//! | 1     | #ff7f0e | 7     | #7f7f7f |
//! | 2     | #2ca02c | 8     | #bcbd22 |
//! | 3     | #d62728 | 9     | #17becf |
//! | 4     | #9467bd | 10    | #393b79 |
//! | 5     | #8c564b | 11    | #637939 |
//!
//! Markers by method: `real` circle, `genie` triangle, `condsample` square,
//! `img2img` diamond, anything else a cross.

use std::fmt::Write;

use crate::eval::boundary::BoundaryReport;

pub const SIZE: f64 = 800.0;
const MARGIN: f64 = 40.0;

pub const CLASS_COLORS: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939",
];

pub fn class_color(class: usize) -> &'static str {
    CLASS_COLORS[class % CLASS_COLORS.len()]
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn marker(out: &mut String, method: &str, x: f64, y: f64, color: &str) {
    let r = 3.5;
    let _ = match method {
        "real" => writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{color}"/>"#
        ),
        "genie" => writeln!(
            out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            x,
            y - r,
            x - r,
            y + r,
            x + r,
            y + r
        ),
        "condsample" => writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{}" height="{}" fill="{color}"/>"#,
            x - r,
            y - r,
            2.0 * r,
            2.0 * r
        ),
        "img2img" => writeln!(
            out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            x,
            y - r,
            x + r,
            y,
            x,
            y + r,
            x - r,
            y
        ),
        _ => writeln!(
            out,
            r#"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="{color}"/>"#,
            x - r,
            y - r,
            x + r,
            y + r,
            x - r,
            y + r,
            x + r,
            y - r
        ),
    };
}

/// Renders one `<g class="series">` per method, in first-appearance order.
/// `metadata` is embedded verbatim (escaped) in a `<metadata>` element.
pub fn render_boundary_svg(report: &BoundaryReport, title: &str, metadata: &str) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in &report.points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let to_px = |x: f64, y: f64| (MARGIN + (x - x0) * scale, SIZE - MARGIN - (y - y0) * scale);

    let mut methods: Vec<&str> = Vec::new();
    for p in &report.points {
        if !methods.contains(&p.method.as_str()) {
            methods.push(&p.method);
        }
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SIZE} {SIZE}" width="{SIZE}" height="{SIZE}">"#
    );
    let _ = writeln!(out, "<metadata>{}</metadata>", escape(metadata));
    let _ = writeln!(
        out,
        r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="16">{}</text>"#,
        escape(title)
    );
    for method in &methods {
        let _ = writeln!(
            out,
            r#"<g class="series" data-method="{}">"#,
            escape(method)
        );
        for p in report.points.iter().filter(|p| p.method == *method) {
            let (px, py) = to_px(p.x, p.y);
            marker(&mut out, method, px, py, class_color(p.label));
        }
        out.push_str("</g>\n");
    }
    for (i, method) in methods.iter().enumerate() {
        let y = 44.0 + 18.0 * i as f64;
        marker(&mut out, method, SIZE - 150.0, y - 4.0, "#000000");
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="13">{}</text>"#,
            SIZE - 138.0,
            escape(method)
        );
    }
    out.push_str("</svg>\n");
    out
}
