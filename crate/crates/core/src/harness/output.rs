//! CSV tables and static SVG plots of a report.

use super::experiment::{parse_fraction_label, ExperimentError};
use crate::metrics::EvalReport;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// One plotted curve: series label and `(x, median AUC)` points by x.
pub type Series = BTreeMap<String, Vec<(f64, f64)>>;

/// Median AUC curves per test combo. The x coordinate is k, or the P3
/// fraction when the train label carries one.
pub fn curves(report: &EvalReport) -> BTreeMap<String, Series> {
    let mut out: BTreeMap<String, Series> = BTreeMap::new();
    for a in report.medians() {
        let (series, x) = match parse_fraction_label(&a.train_combo) {
            Some((combo, f)) => (combo.to_string(), f),
            None => (a.train_combo.clone(), a.k as f64),
        };
        out.entry(a.test_combo.clone())
            .or_default()
            .entry(series)
            .or_default()
            .push((x, a.median_roc_auc));
    }
    for series in out.values_mut() {
        for pts in series.values_mut() {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Renders one plot: a polyline with point markers per series, y fixed to
/// [0, 1].
pub fn render_svg(title: &str, x_label: &str, series: &Series) -> String {
    let xs: Vec<f64> = series.values().flatten().map(|p| p.0).collect();
    let (mut x0, mut x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x0 == x1 {
        (x0, x1) = (x0 - 1.0, x1 + 1.0);
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - y) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT} {TOP} V{} H{}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for i in 0..=4 {
        let y = i as f64 * 0.25;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{py}" x2="{}" y2="{py}" stroke="#dddddd"/><text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            sy(y) + 4.0,
            num(y),
            py = sy(y)
        );
    }
    let mut ticks: Vec<f64> = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            sx(x),
            TOP + ph + 16.0,
            num(x)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">ROC AUC</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-series="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(name),
            coords.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 10.0 + i as f64 * 18.0;
        let lx = LEFT + pw + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `{name}.csv`, `{name}_medians.csv` and one `{name}_test_{combo}.svg`
/// per test combo. Returns the written paths.
pub fn emit_outputs(report: &EvalReport, name: &str, out_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    if report.entries.is_empty() {
        return Err(ExperimentError::EmptyReport);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut write = |file: String, body: &str| -> Result<(), ExperimentError> {
        let path = out_dir.join(file);
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    let mut sorted = report.clone();
    sorted.sort();
    write(format!("{name}.csv"), &sorted.to_csv())?;
    write(format!("{name}_medians.csv"), &sorted.medians_csv())?;
    for (test, series) in curves(&sorted) {
        let fractions = sorted.entries.iter().any(|e| parse_fraction_label(&e.key.train_combo).is_some());
        let x_label = if fractions { "P3 train fraction" } else { "k" };
        let svg = render_svg(&format!("{name}: tested on {test}"), x_label, &series);
        write(format!("{name}_test_{}.svg", test.replace('+', "-")), &svg)?;
    }
    Ok(written)
}
