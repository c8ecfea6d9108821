//! Self-contained SVG plots on a fixed 800x600 canvas.

use std::fmt::Write;

use stiffkit::analysis::BoundaryPoint;

use crate::bench::{BenchReport, CellStatus};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 190.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        escape(title)
    );
}

fn plot_box(svg: &mut String) {
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    );
}

fn legend(svg: &mut String, entries: &[(String, &str)]) {
    let x = WIDTH - MARGIN_R + 15.0;
    for (k, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN_T + 15.0 + 20.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(label)
        );
    }
}

fn padded(lo: f64, hi: f64, pad: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        (lo - pad.max(0.5), hi + pad.max(0.5))
    } else {
        let p = (hi - lo) * pad;
        (lo - p, hi + p)
    }
}

/// Log-log error against wall time, one polyline per (method, W strategy).
/// Failed cells and zero timings are skipped.
pub fn efficiency_svg(report: &BenchReport, title: &str) -> String {
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let multi_strategy = report
        .rows
        .iter()
        .any(|r| r.w_strategy != report.rows[0].w_strategy);
    for r in &report.rows {
        if r.status != CellStatus::Ok || !(r.error > 0.0) || !(r.seconds > 0.0) {
            continue;
        }
        let label = if multi_strategy {
            format!("{} ({})", r.method, r.w_strategy)
        } else {
            r.method.clone()
        };
        let pt = (r.seconds.log10(), r.error.log10());
        match series.iter_mut().find(|(l, _)| *l == label) {
            Some((_, pts)) => pts.push(pt),
            None => series.push((label, vec![pt])),
        }
    }

    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().cloned()).collect();
    let fold = |f: fn(&(f64, f64)) -> f64| {
        all.iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    };
    let ((xl, xh), (yl, yh)) = if all.is_empty() {
        ((-3.0, 0.0), (-8.0, 0.0))
    } else {
        (fold(|p| p.0), fold(|p| p.1))
    };
    let (x0, x1) = padded(xl.floor().min(xl), xh.ceil().max(xh), 0.0);
    let (y0, y1) = padded(yl.floor(), yh.ceil(), 0.0);
    let fr = Frame { x0, x1, y0, y1 };

    let mut svg = String::new();
    header(&mut svg, title);
    plot_box(&mut svg);
    for d in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let x = fr.px(d as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">1e{d}</text>"##,
            MARGIN_T,
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 18.0
        );
    }
    for d in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let y = fr.py(d as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            MARGIN_L,
            WIDTH - MARGIN_R,
            MARGIN_L - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">CPU time (s)</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">global error</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    let mut entries = Vec::new();
    for (k, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", fr.px(x), fr.py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                fr.px(x),
                fr.py(y)
            );
        }
        entries.push((label.clone(), color));
    }
    legend(&mut svg, &entries);
    svg.push_str("</svg>\n");
    svg
}

/// Stability-region boundaries on equally scaled axes.
pub fn boundary_svg(curves: &[(String, Vec<BoundaryPoint>)], title: &str) -> String {
    let pts = curves.iter().flat_map(|(_, p)| p.iter());
    let (mut xl, mut xh, mut yl, mut yh) = (-1.0f64, 1.0f64, -1.0f64, 1.0f64);
    for p in pts {
        xl = xl.min(p.re);
        xh = xh.max(p.re);
        yl = yl.min(p.im);
        yh = yh.max(p.im);
    }
    let (xl, xh) = padded(xl, xh, 0.05);
    let (yl, yh) = padded(yl, yh, 0.05);
    // equal units on both axes
    let aw = WIDTH - MARGIN_L - MARGIN_R;
    let ah = HEIGHT - MARGIN_T - MARGIN_B;
    let scale = ((xh - xl) / aw).max((yh - yl) / ah);
    let (cx, cy) = ((xl + xh) / 2.0, (yl + yh) / 2.0);
    let fr = Frame {
        x0: cx - scale * aw / 2.0,
        x1: cx + scale * aw / 2.0,
        y0: cy - scale * ah / 2.0,
        y1: cy + scale * ah / 2.0,
    };

    let mut svg = String::new();
    header(&mut svg, title);
    plot_box(&mut svg);
    let step = tick_step(fr.x1 - fr.x0);
    let mut t = (fr.x0 / step).ceil() * step;
    while t <= fr.x1 {
        let x = fr.px(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#eee"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            MARGIN_T,
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 18.0,
            tick_label(t)
        );
        t += step;
    }
    let mut t = (fr.y0 / step).ceil() * step;
    while t <= fr.y1 {
        let y = fr.py(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#eee"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            MARGIN_L,
            WIDTH - MARGIN_R,
            MARGIN_L - 6.0,
            y + 4.0,
            tick_label(t)
        );
        t += step;
    }
    // real and imaginary axes
    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="black" stroke-width="0.8"/>"#,
        MARGIN_L,
        fr.py(0.0),
        WIDTH - MARGIN_R,
        fr.py(0.0)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{}" x2="{:.2}" y2="{}" stroke="black" stroke-width="0.8"/>"#,
        fr.px(0.0),
        MARGIN_T,
        fr.px(0.0),
        HEIGHT - MARGIN_B
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">Re z</text><text x="20" y="{}" transform="rotate(-90 20 {})" text-anchor="middle">Im z</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 15.0,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    let mut entries = Vec::new();
    for (k, (label, points)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(svg, r#"<g fill="{color}">"#);
        for p in points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.6"/>"#,
                fr.px(p.re),
                fr.py(p.im)
            );
        }
        svg.push_str("</g>\n");
        entries.push((label.clone(), color));
    }
    legend(&mut svg, &entries);
    svg.push_str("</svg>\n");
    svg
}

fn tick_step(span: f64) -> f64 {
    let raw = span / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

fn tick_label(v: f64) -> String {
    let v = if v.abs() < 1e-9 { 0.0 } else { v };
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
