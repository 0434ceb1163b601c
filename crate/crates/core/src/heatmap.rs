//! SVG heatmaps of matrix magnitudes.
//!
//! Output is plain text with fixed number formatting, so the same input
//! always produces the same bytes.

use std::fmt::Write as _;

use crate::linalg::Matrix;

const CELL: usize = 12;
const MARGIN: usize = 24;
const LOW: [u8; 3] = [0xff, 0xff, 0xff];
const HIGH: [u8; 3] = [0x08, 0x30, 0x6b];

/// Largest absolute entry over all inputs, or 1 when every entry is zero.
pub fn shared_scale(mats: &[&Matrix]) -> f64 {
    let m = mats.iter().map(|m| m.max_abs()).fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Fill color for `|v|` on the scale `[0, max]`.
pub fn color(v: f64, max: f64) -> String {
    let t = (v.abs() / max).clamp(0.0, 1.0);
    let ch = |k: usize| {
        let a = LOW[k] as f64;
        let b = HIGH[k] as f64;
        (a + (b - a) * t).round() as u8
    };
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `m` with row 1 at the top. Zero cells are left white.
pub fn render_svg(m: &Matrix, max: f64, title: &str) -> String {
    let w = m.cols() * CELL + 2 * MARGIN;
    let h = m.rows() * CELL + 2 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="{}"/>"#, color(0.0, 1.0));
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="12">{} (max |value| {:.4})</text>"#,
        MARGIN - 8,
        escape(title),
        max
    );
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let v = m[(r, c)];
            if v == 0.0 {
                continue;
            }
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}"/>"#,
                MARGIN + c * CELL,
                MARGIN + r * CELL,
                color(v, max)
            );
        }
    }
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#444444"/>"##,
        m.cols() * CELL,
        m.rows() * CELL
    );
    s.push_str("</svg>\n");
    s
}

/// One image per input on a common color scale.
pub fn render_all(inputs: &[(&str, &Matrix)]) -> Vec<String> {
    let max = shared_scale(&inputs.iter().map(|(_, m)| *m).collect::<Vec<_>>());
    inputs
        .iter()
        .map(|(title, m)| render_svg(m, max, title))
        .collect()
}
