use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::ArrayView2;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Scatter plot of the first two columns, one color per group, with a
/// legend. Output depends only on the arguments.
pub fn scatter_svg(coords: ArrayView2<f64>, groups: &[String], title: &str, axis: (&str, &str)) -> String {
    let (left, right, top, bottom) = (60.0, 160.0, 40.0, 50.0);
    let pw = WIDTH - left - right;
    let ph = HEIGHT - top - bottom;
    let xs: Vec<f64> = coords.column(0).to_vec();
    let ys: Vec<f64> = coords.column(1).to_vec();
    let range = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            (lo - 1.0, lo + 1.0)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = if xs.is_empty() { (0.0, 1.0) } else { range(&xs) };
    let (y0, y1) = if ys.is_empty() { (0.0, 1.0) } else { range(&ys) };

    let mut order: BTreeMap<&str, usize> = BTreeMap::new();
    for g in groups {
        let next = order.len();
        order.entry(g.as_str()).or_insert(next);
    }
    // legend and colors follow sorted group names
    let names: Vec<&str> = order.keys().copied().collect();
    let color = |g: &str| PALETTE[names.iter().position(|n| *n == g).unwrap_or(0) % PALETTE.len()];

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
        left + pw / 2.0,
        HEIGHT - 15.0,
        escape(axis.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 18 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(axis.1)
    );
    for (i, g) in groups.iter().enumerate() {
        let px = left + (xs[i] - x0) / (x1 - x0) * pw;
        let py = top + ph - (ys[i] - y0) / (y1 - y0) * ph;
        let _ = writeln!(
            s,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            color(g)
        );
    }
    for (k, name) in names.iter().enumerate() {
        let y = top + 10.0 + 20.0 * k as f64;
        let x = left + pw + 20.0;
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.1}" cy="{y:.1}" r="5" fill="{}"/><text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
            color(name),
            x + 12.0,
            y + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
