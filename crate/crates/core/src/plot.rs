//! Minimal static SVG charts for reports: log-log error curves with a fitted
//! power law, and labelled bar charts.

use std::fmt::Write;

use crate::scaling::PowerLawFit;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>
"#,
        W / 2.0,
        esc(title),
        LEFT + (W - LEFT - RIGHT) / 2.0,
        H - 15.0,
        esc(xlabel),
        TOP + (H - TOP - BOTTOM) / 2.0,
        TOP + (H - TOP - BOTTOM) / 2.0,
        esc(ylabel),
        W - LEFT - RIGHT,
        H - TOP - BOTTOM,
    );
}

/// Log-log scatter of one or more named series, with an optional fitted
/// line drawn over the fit's x range.
pub fn loglog_svg(
    series: &[(&str, Vec<(f64, f64)>)],
    fits: &[(&str, PowerLawFit)],
    title: &str,
    xlabel: &str,
    ylabel: &str,
) -> String {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .collect();
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel);
    if pts.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let lx = |v: f64| v.log10();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(lx(x));
        x1 = x1.max(lx(x));
        y0 = y0.min(lx(y));
        y1 = y1.max(lx(y));
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let px = |x: f64| LEFT + (lx(x) - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (lx(y) - y0) / (y1 - y0) * (H - TOP - BOTTOM);
    for d in x0 as i32..=x1 as i32 {
        let x = px(10f64.powi(d));
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="#ddd"/><text x="{x:.1}" y="{}" text-anchor="middle">1e{d}</text>"##,
            TOP,
            H - BOTTOM,
            H - BOTTOM + 16.0
        );
    }
    for d in y0 as i32..=y1 as i32 {
        let y = py(10f64.powi(d));
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{d}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for (k, (name, v)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        for &(x, y) in v.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0) {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            LEFT + 10.0,
            TOP + 16.0 + 15.0 * k as f64,
            esc(name)
        );
    }
    for (k, (name, fit)) in fits.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let (a, b) = (fit.x_min.max(1e-300), fit.x_max.max(fit.x_min));
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-dasharray="5,3"/>"#,
            px(a),
            py(fit.predict(a)),
            px(b),
            py(fit.predict(b))
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end" fill="{color}">{}: A={:.3}, alpha={:.3}</text>"#,
            W - RIGHT - 8.0,
            TOP + 16.0 + 15.0 * k as f64,
            esc(name),
            fit.a,
            fit.alpha
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical bars on a 0..=1 scale (accuracies, recalls).
pub fn bar_svg(labels: &[String], values: &[f64], title: &str, ylabel: &str) -> String {
    let mut out = String::new();
    header(&mut out, title, "", ylabel);
    let n = labels.len().max(1) as f64;
    let slot = (W - LEFT - RIGHT) / n;
    let py = |v: f64| H - BOTTOM - v.clamp(0.0, 1.0) * (H - TOP - BOTTOM);
    for t in 0..=4 {
        let v = t as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            LEFT - 6.0,
            py(v) + 4.0
        );
    }
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            out,
            r##"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#1f77b4"/><text x="{:.1}" y="{}" text-anchor="middle">{}</text><text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{v:.3}</text>"##,
            py(v),
            slot * 0.7,
            H - BOTTOM - py(v),
            x + slot * 0.35,
            H - BOTTOM + 16.0,
            esc(label),
            x + slot * 0.35,
            py(v) - 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}
