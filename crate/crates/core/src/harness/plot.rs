//! Static SVG figures: grasps and errors against the threshold, overall
//! error, and violin plots of the grasp distribution.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::stats::{overall_error, StatSummary};
use super::TrialRecord;
use crate::explore::Policy;
use crate::features::Method;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 50.0;

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self {
            body: String::new(),
            width,
            height,
        }
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        )
        .unwrap();
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        writeln!(
            self.body,
            r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{stroke}"/>"#
        )
        .unwrap();
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Rounds `max` up to a 1-2-5 step so the axis ends on a tick.
fn nice_max(max: f64) -> (f64, f64) {
    if max <= 0.0 {
        return (1.0, 0.25);
    }
    let raw = max / 4.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap();
    ((max / step).ceil() * step, step)
}

/// Draws one line chart with its origin at `(ox, oy)`.
#[allow(clippy::too_many_arguments)]
fn line_panel(
    svg: &mut Svg,
    ox: f64,
    oy: f64,
    title: &str,
    x_label: &str,
    y_label: &str,
    (x_min, x_max): (f64, f64),
    series: &[Series],
) {
    let y_top = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .fold(0.0, f64::max);
    let (y_max, y_step) = nice_max(y_top);
    let (left, top) = (ox + MARGIN, oy + 30.0);
    let (w, h) = (PANEL_W - MARGIN - 10.0, PANEL_H - 80.0);
    let sx = |x: f64| left + (x - x_min) / (x_max - x_min).max(1e-12) * w;
    let sy = |y: f64| top + h - y / y_max * h;
    svg.text(ox + PANEL_W / 2.0, oy + 18.0, 13.0, "middle", title);
    svg.line(left, top + h, left + w, top + h, "black");
    svg.line(left, top, left, top + h, "black");
    let mut y = 0.0;
    while y <= y_max + 1e-9 {
        svg.line(left - 4.0, sy(y), left, sy(y), "black");
        svg.text(left - 6.0, sy(y) + 4.0, 10.0, "end", &format!("{y}"));
        y += y_step;
    }
    let mut xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs {
        svg.line(sx(x), top + h, sx(x), top + h + 4.0, "black");
        svg.text(sx(x), top + h + 15.0, 9.0, "middle", &format!("{x}"));
    }
    svg.text(left + w / 2.0, oy + PANEL_H - 22.0, 11.0, "middle", x_label);
    writeln!(
        svg.body,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
        ox + 12.0,
        top + h / 2.0,
        ox + 12.0,
        top + h / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        writeln!(
            svg.body,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        for p in &pts {
            let (x, y) = p.split_once(',').unwrap();
            writeln!(
                svg.body,
                r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#
            )
            .unwrap();
        }
        let ly = oy + PANEL_H - 8.0;
        let lx = ox + 10.0 + i as f64 * (PANEL_W - 20.0) / series.len().max(1) as f64;
        writeln!(
            svg.body,
            r#"<rect x="{lx:.1}" y="{:.1}" width="8" height="8" fill="{color}"/>"#,
            ly - 8.0
        )
        .unwrap();
        svg.text(lx + 11.0, ly, 9.0, "start", &s.label);
    }
}

fn combos(summaries: &[StatSummary]) -> Vec<(Method, Policy)> {
    let mut v: Vec<(Method, Policy)> = summaries.iter().map(|s| (s.method, s.policy)).collect();
    v.sort();
    v.dedup();
    v
}

fn betas(summaries: &[StatSummary]) -> Vec<f64> {
    let mut b: Vec<f64> = summaries.iter().map(|s| s.beta).collect();
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

fn beta_range(b: &[f64]) -> (f64, f64) {
    match (b.first(), b.last()) {
        (Some(&lo), Some(&hi)) if hi > lo => (lo, hi),
        (Some(&lo), _) => (lo - 0.05, lo + 0.05),
        _ => (0.0, 1.0),
    }
}

/// One panel per method and policy, one line per object.
fn per_object_grid(
    summaries: &[StatSummary],
    y_label: &str,
    value: impl Fn(&StatSummary) -> f64,
) -> String {
    let panels = combos(summaries);
    let cols = 2usize.min(panels.len()).max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let mut svg = Svg::new(PANEL_W * cols as f64, PANEL_H * rows as f64);
    let range = beta_range(&betas(summaries));
    for (i, &(method, policy)) in panels.iter().enumerate() {
        let mut by_object: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for s in summaries
            .iter()
            .filter(|s| s.method == method && s.policy == policy)
        {
            by_object
                .entry(&s.object)
                .or_default()
                .push((s.beta, value(s)));
        }
        let series: Vec<Series> = by_object
            .into_iter()
            .map(|(o, points)| Series {
                label: o.to_string(),
                points,
            })
            .collect();
        line_panel(
            &mut svg,
            PANEL_W * (i % cols) as f64,
            PANEL_H * (i / cols) as f64,
            &format!("{method} + {policy}"),
            "threshold",
            y_label,
            range,
            &series,
        );
    }
    svg.finish()
}

fn overall_error_figure(summaries: &[StatSummary]) -> String {
    let b = betas(summaries);
    let series: Vec<Series> = combos(summaries)
        .into_iter()
        .map(|(m, p)| Series {
            label: format!("{m} + {p}"),
            points: b
                .iter()
                .filter_map(|&beta| overall_error(summaries, m, p, beta).map(|e| (beta, e)))
                .collect(),
        })
        .collect();
    let mut svg = Svg::new(PANEL_W, PANEL_H);
    line_panel(
        &mut svg,
        0.0,
        0.0,
        "mean error over objects",
        "threshold",
        "error %",
        beta_range(&b),
        &series,
    );
    svg.finish()
}

/// Gaussian kernel density of `values` sampled at `grid`, with
/// Silverman's bandwidth (floored so constant samples still draw).
fn density(values: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let bw = (1.06 * sd * n.powf(-0.2)).max(0.5);
    grid.iter()
        .map(|&x| {
            values
                .iter()
                .map(|v| (-0.5 * ((x - v) / bw).powi(2)).exp())
                .sum::<f64>()
                / (n * bw * (2.0 * std::f64::consts::PI).sqrt())
        })
        .collect()
}

/// Violin plot of grasp counts at the given threshold: one group per
/// object, one violin per method and policy.
fn violin_figure(records: &[TrialRecord], beta: f64) -> String {
    let mut groups: BTreeMap<(&str, Method, Policy), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.beta == beta) {
        groups
            .entry((&r.object, r.method, r.policy))
            .or_default()
            .push(r.grasps as f64);
    }
    let combos: Vec<(Method, Policy)> = {
        let mut c: Vec<_> = groups.keys().map(|k| (k.1, k.2)).collect();
        c.sort();
        c.dedup();
        c
    };
    let objects: Vec<&str> = {
        let mut o: Vec<_> = groups.keys().map(|k| k.0).collect();
        o.dedup();
        o
    };
    let slot = 46.0;
    let group_w = slot * combos.len() as f64 + 20.0;
    let (left, top, h) = (MARGIN + 10.0, 40.0, 300.0);
    let width = left + group_w * objects.len() as f64 + 20.0;
    let mut svg = Svg::new(width, top + h + 80.0);
    svg.text(
        width / 2.0,
        22.0,
        13.0,
        "middle",
        &format!("grasps per trial at threshold {beta}"),
    );
    let y_top = groups.values().flatten().copied().fold(1.0, f64::max);
    let (y_max, y_step) = nice_max(y_top);
    let sy = |y: f64| top + h - y / y_max * h;
    svg.line(left, top, left, top + h, "black");
    svg.line(left, top + h, width - 10.0, top + h, "black");
    let mut y = 0.0;
    while y <= y_max + 1e-9 {
        svg.line(left - 4.0, sy(y), left, sy(y), "black");
        svg.text(left - 6.0, sy(y) + 4.0, 10.0, "end", &format!("{y}"));
        y += y_step;
    }
    let grid: Vec<f64> = (0..=80).map(|i| y_max * i as f64 / 80.0).collect();
    for (gi, obj) in objects.iter().enumerate() {
        let gx = left + 10.0 + gi as f64 * group_w;
        svg.text(
            gx + group_w / 2.0 - 10.0,
            top + h + 18.0,
            11.0,
            "middle",
            obj,
        );
        for (ci, combo) in combos.iter().enumerate() {
            let Some(values) = groups.get(&(obj, combo.0, combo.1)) else {
                continue;
            };
            let color = PALETTE[ci % PALETTE.len()];
            let cx = gx + slot * (ci as f64 + 0.5);
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(0.0, f64::max);
            let pts: Vec<(f64, f64)> = grid
                .iter()
                .copied()
                .zip(density(values, &grid))
                .filter(|&(g, _)| g >= lo - 0.5 && g <= hi + 0.5)
                .collect();
            let peak = pts.iter().map(|p| p.1).fold(1e-12, f64::max);
            let half = slot * 0.42;
            let mut path = String::new();
            for (i, &(g, d)) in pts.iter().enumerate() {
                let cmd = if i == 0 { 'M' } else { 'L' };
                write!(path, "{cmd}{:.1},{:.1} ", cx + d / peak * half, sy(g)).unwrap();
            }
            for &(g, d) in pts.iter().rev() {
                write!(path, "L{:.1},{:.1} ", cx - d / peak * half, sy(g)).unwrap();
            }
            path.push('Z');
            writeln!(
                svg.body,
                r#"<path d="{path}" fill="{color}" fill-opacity="0.45" stroke="{color}"/>"#
            )
            .unwrap();
            let med = super::stats::median(values);
            svg.line(cx - half * 0.6, sy(med), cx + half * 0.6, sy(med), "black");
        }
    }
    for (ci, (m, p)) in combos.iter().enumerate() {
        let lx = left + ci as f64 * 120.0;
        let ly = top + h + 50.0;
        writeln!(
            svg.body,
            r#"<rect x="{lx:.1}" y="{:.1}" width="8" height="8" fill="{}"/>"#,
            ly - 8.0,
            PALETTE[ci % PALETTE.len()]
        )
        .unwrap();
        svg.text(lx + 11.0, ly, 10.0, "start", &format!("{m} + {p}"));
    }
    svg.finish()
}

/// All figures as `(file name, SVG text)`.
pub fn figures(summaries: &[StatSummary], records: &[TrialRecord]) -> Vec<(String, String)> {
    let mut out = vec![
        (
            "avg_grasps.svg".to_string(),
            per_object_grid(summaries, "average grasps", |s| s.avg),
        ),
        (
            "error.svg".to_string(),
            per_object_grid(summaries, "error %", |s| s.error_pct),
        ),
        (
            "overall_error.svg".to_string(),
            overall_error_figure(summaries),
        ),
    ];
    if let Some(&top) = betas(summaries).last() {
        out.push(("violin.svg".to_string(), violin_figure(records, top)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::summarize;

    fn records() -> Vec<TrialRecord> {
        let mut v = Vec::new();
        for (i, beta) in [0.5, 0.99].into_iter().enumerate() {
            for trial in 0..20 {
                for method in Method::ALL {
                    v.push(TrialRecord {
                        object: if trial % 2 == 0 { "bowl" } else { "mug" }.into(),
                        method,
                        policy: Policy::Passive,
                        beta,
                        trial,
                        grasps: 1 + trial % 5 + i * 3,
                        decided: Some("bowl".into()),
                        correct: trial % 2 == 0,
                        capped: false,
                    });
                }
            }
        }
        v
    }

    #[test]
    fn figures_are_well_formed_and_stable() {
        let r = records();
        let s = summarize(&r).unwrap();
        let a = figures(&s, &r);
        assert_eq!(a, figures(&s, &r));
        let names: Vec<_> = a.iter().map(|f| f.0.as_str()).collect();
        assert_eq!(
            names,
            [
                "avg_grasps.svg",
                "error.svg",
                "overall_error.svg",
                "violin.svg"
            ]
        );
        for (_, svg) in &a {
            assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
            assert!(!svg.contains("NaN") && !svg.contains("inf"));
        }
    }

    #[test]
    fn density_integrates_to_about_one() {
        let values = [3.0, 4.0, 4.0, 9.0];
        let grid: Vec<f64> = (0..=2000).map(|i| -10.0 + i as f64 * 0.02).collect();
        let mass: f64 = density(&values, &grid).iter().sum::<f64>() * 0.02;
        assert!((mass - 1.0).abs() < 1e-3);
    }

    #[test]
    fn nice_axis() {
        assert_eq!(nice_max(7.0), (8.0, 2.0));
        assert_eq!(nice_max(100.0), (100.0, 50.0));
        assert_eq!(nice_max(0.0), (1.0, 0.25));
    }
}
