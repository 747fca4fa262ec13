//! Self-contained SVG line charts.

use std::fmt::Write;

use crate::hedonic::PolicyChange;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: [f64; 4] = [40.0, 150.0, 50.0, 70.0]; // top, right, bottom, left
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// A marked point with extra `data-*` attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct Marker {
    pub id: String,
    pub at: (f64, f64),
    pub label: String,
    pub data: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub markers: Vec<Marker>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        let pad = 0.5 * (1.0 + lo.abs() * 0.1);
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let all = || self.series.iter().flat_map(|s| s.points.iter()).chain(self.markers.iter().map(|m| &m.at));
        let (x0, x1) = range(all().map(|p| p.0));
        let (y0, y1) = range(all().map(|p| p.1));
        let [top, right, bottom, left] = MARGIN;
        let (pw, ph) = (WIDTH - left - right, HEIGHT - top - bottom);
        let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, left + pw / 2.0, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<g id="axes" stroke="black"><line x1="{left}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{b}"/></g>"#,
            b = top + ph,
            r = left + pw
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, px(xv), top + ph + 18.0, tick(xv));
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, py(yv) + 4.0, tick(yv));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, HEIGHT - 10.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
            escape(&self.y_label),
            y = top + ph / 2.0
        );
        for (i, series) in self.series.iter().enumerate() {
            let colour = COLOURS[i % COLOURS.len()];
            let pts: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.3},{:.3}", px(x), py(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline class="series" data-label="{}" fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                escape(&series.label),
                pts.join(" ")
            );
            let ly = top + 14.0 + 18.0 * i as f64;
            let lx = left + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(&series.label)
            );
        }
        for m in &self.markers {
            let data: String = m.data.iter().map(|(k, v)| format!(r#" data-{}="{}""#, escape(k), super::fmt_num(*v))).collect();
            let _ = writeln!(
                s,
                r#"<circle id="{}" cx="{:.3}" cy="{:.3}" r="4" fill="black"{data}/><text x="{:.3}" y="{:.3}">{}</text>"#,
                escape(&m.id),
                px(m.at.0),
                py(m.at.1),
                px(m.at.0) + 6.0,
                py(m.at.1) - 6.0,
                escape(&m.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// `ln s` where the two frontiers give the same rent, if they cross.
pub fn frontier_crossing(change: &PolicyChange) -> Option<f64> {
    let d2 = change.b2 - change.a2;
    (d2 != 0.0).then(|| (change.a1 - change.b1) / d2)
}

/// Rent against school score under both frontiers over `[lo, hi]`, with the
/// crossing marked when it falls inside the range.
pub fn frontier_chart(change: &PolicyChange, score_range: [f64; 2], points: usize) -> Chart {
    let [lo, hi] = score_range;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..points)
        .map(|i| (llo + (lhi - llo) * i as f64 / (points - 1) as f64).exp())
        .collect();
    let curve = |t1: f64, t2: f64| grid.iter().map(|&s| (s, t1 + t2 * s.ln())).collect();
    let mut markers = Vec::new();
    if let Some(ls) = frontier_crossing(change).filter(|ls| (llo..=lhi).contains(ls)) {
        let s = ls.exp();
        markers.push(Marker {
            id: "crossing".into(),
            at: (s, change.a1 + change.a2 * ls),
            label: format!("crossing at score {}", tick(s)),
            data: vec![("ln-s".into(), ls), ("score".into(), s)],
        });
    }
    Chart {
        title: "Rent against school quality before and after".into(),
        x_label: "school score".into(),
        y_label: "weekly rent (GBP)".into(),
        series: vec![
            Series {
                label: "frontier a".into(),
                points: curve(change.a1, change.a2),
            },
            Series {
                label: "frontier b".into(),
                points: curve(change.b1, change.b2),
            },
        ],
        markers,
    }
}

/// CV against τ with one line per income level; input rows are `(τ, y0, cv)`.
pub fn cv_chart(rows: &[(f64, f64, f64)]) -> Chart {
    let mut incomes: Vec<f64> = Vec::new();
    for &(_, y, _) in rows {
        if !incomes.contains(&y) {
            incomes.push(y);
        }
    }
    let series = incomes
        .iter()
        .map(|&y| {
            let mut points: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 == y).map(|r| (r.0, r.2)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                label: format!("y0 = {}", tick(y)),
                points,
            }
        })
        .collect();
    Chart {
        title: "Compensating variation by quantile".into(),
        x_label: "tau".into(),
        y_label: "CV (GBP per week)".into(),
        series,
        markers: Vec::new(),
    }
}
