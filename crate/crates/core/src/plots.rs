//! Scatter plots of the correlations in a report: one CSV and one
//! self-contained SVG per correlation, named after it.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::report::{CorrelationEntry, CorrelationReport};

const SIZE: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// `model_id,x,y` rows in model order.
pub fn plot_csv(entry: &CorrelationEntry) -> String {
    let mut out = String::from("model_id,x,y\n");
    for ((id, x), y) in entry.x.model_ids.iter().zip(&entry.x.values).zip(&entry.y.values) {
        writeln!(out, "{id},{x},{y}").unwrap();
    }
    out
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Axis range padded by 5%, widened when all values coincide.
fn axis_range(values: &[f64]) -> (f64, f64) {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
    (lo - 0.05 * span, hi + 0.05 * span)
}

pub fn plot_svg(entry: &CorrelationEntry) -> String {
    let (x0, x1) = axis_range(&entry.x.values);
    let (y0, y1) = axis_range(&entry.y.values);
    let inner = SIZE - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * inner;
    let py = |y: f64| SIZE - MARGIN - (y - y0) / (y1 - y0) * inner;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let title = match entry.value {
        Some(v) => format!("{} (rho = {v:.3})", entry.name),
        None => format!("{} ({:?})", entry.name, entry.status),
    };
    writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, SIZE / 2.0, escape(&title)).unwrap();
    writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="#444"/>"##
    )
    .unwrap();
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#,
            px(xv),
            SIZE - MARGIN + 16.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#,
            MARGIN - 6.0,
            py(yv) + 4.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        SIZE - 16.0,
        escape(&entry.x.label())
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        SIZE / 2.0,
        escape(&entry.y.label())
    )
    .unwrap();
    for ((id, &x), &y) in entry.x.model_ids.iter().zip(&entry.x.values).zip(&entry.y.values) {
        if !(x.is_finite() && y.is_finite()) {
            continue;
        }
        writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#1f77b4"><title>{}</title></circle>"##,
            px(x),
            py(y),
            escape(id)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `<name>.csv` and `<name>.svg` for every correlation, Fisher ones
/// included when the report has a Fisher section.
pub fn emit_plots(report: &CorrelationReport, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for entry in report.all_correlations() {
        let csv = out_dir.join(format!("{}.csv", entry.name));
        fs::write(&csv, plot_csv(entry))?;
        let svg = out_dir.join(format!("{}.svg", entry.name));
        fs::write(&svg, plot_svg(entry))?;
        written.push(csv);
        written.push(svg);
    }
    Ok(written)
}
