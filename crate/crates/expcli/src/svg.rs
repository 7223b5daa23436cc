//! Static line charts for reports. Layout depends only on report content.

use std::fmt::Write;

use crate::report::{Cell, Report};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

struct Series {
    name: String,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

fn collect(report: &Report) -> Option<(String, Vec<Series>, bool)> {
    let spec = report.plot.as_ref()?;
    let keep: Vec<&Vec<Cell>> = report
        .rows
        .iter()
        .filter(|r| match &spec.filter {
            Some((col, want)) => report.column_index(col).is_some_and(|i| r[i].to_string() == *want),
            None => true,
        })
        .collect();
    let xi = report.column_index(&spec.x);
    let names = spec.series.iter().map(|s| (s, false)).chain(spec.oracle_series.iter().map(|s| (s, true)));
    let mut series = Vec::new();
    for (name, dashed) in names {
        let Some(yi) = report.column_index(name) else { continue };
        let points = keep
            .iter()
            .enumerate()
            .filter_map(|(pos, r)| {
                let x = xi.and_then(|i| r[i].as_f64()).unwrap_or(pos as f64);
                let y = r[yi].as_f64()?;
                let y = if spec.log_scale {
                    if y > 0.0 {
                        y.log10()
                    } else {
                        return None;
                    }
                } else {
                    y
                };
                (x.is_finite() && y.is_finite()).then_some((x, y))
            })
            .collect();
        series.push(Series {
            name: name.clone(),
            dashed,
            points,
        });
    }
    Some((spec.title.clone(), series, spec.log_scale))
}

pub fn render(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let Some((title, series, log_scale)) = collect(report) else {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="14">{}: no chart</text>"#,
            WIDTH / 2.0,
            HEIGHT / 2.0,
            escape(&report.experiment)
        );
        out.push_str("</svg>\n");
        return out;
    };
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        let pad = if y0 == 0.0 { 1.0 } else { y0.abs() * 0.1 };
        y0 -= pad;
        y1 += pad;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&title)
    );
    let _ = writeln!(
        out,
        r##"<path d="M {LEFT} {TOP} L {LEFT} {} L {} {}" fill="none" stroke="#333" stroke-width="1"/>"##,
        TOP + ph,
        LEFT + pw,
        TOP + ph
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let ylabel = if log_scale { format!("1e{:.2}", yv) } else { tick_label(yv) };
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            sx(xv),
            TOP + ph + 18.0,
            escape(&tick_label(xv))
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            LEFT - 6.0,
            sy(yv) + 4.0,
            escape(&ylabel)
        );
    }
    if let Some(spec) = &report.plot {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&spec.x)
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        if !s.points.is_empty() {
            let coords: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                coords.join(" ")
            );
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}
