//! Run artifacts: `rounds.csv`, `summary.json` and SVG line charts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{FlError, Result};
use crate::runner::RunSummary;

/// CSV with header `round,global_loss,<eval metrics…>,drift,lambda_ref,psi`.
pub fn rounds_csv(summary: &RunSummary) -> String {
    let metrics: Vec<&String> = summary
        .rounds
        .first()
        .map(|r| r.eval.keys().collect())
        .unwrap_or_default();
    let mut out = String::from("round,global_loss");
    for m in &metrics {
        out.push(',');
        out.push_str(m);
    }
    out.push_str(",drift,lambda_ref,psi\n");
    for r in &summary.rounds {
        let _ = write!(out, "{},{}", r.round, r.global_loss);
        for m in &metrics {
            let _ = write!(out, ",{}", r.eval[*m]);
        }
        let _ = writeln!(out, ",{},{},{}", r.drift, r.lambda_ref, r.psi);
    }
    out
}

/// A named `(x, y)` series for [`line_chart`].
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Minimal standalone SVG line chart: one `<polyline>` per series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 70.0;
    const R: f64 = 150.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;

    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        (W - R + L) / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{L}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - B,
        W - R,
        H - B
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{L}" y1="{T}" x2="{L}" y2="{}" stroke="black"/>"#,
        H - B
    );
    for (v, label) in [(x0, x0), (x1, x1)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            px(v),
            H - B + 16.0,
            fmt_tick(label)
        );
    }
    for v in [y0, y1] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            L - 6.0,
            py(v) + 4.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        (W - R + L) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = T + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            W - R + 10.0,
            escape(s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| FlError::io(&path, e))?;
    Ok(path)
}

/// Write `rounds.csv`, `summary.json` and one `<metric>.svg` per evaluation metric.
pub fn emit_outputs(summary: &RunSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| FlError::io(dir, e))?;
    let mut written = vec![
        write(dir.join("rounds.csv"), &rounds_csv(summary))?,
        write(
            dir.join("summary.json"),
            &serde_json::to_string_pretty(summary).map_err(|e| FlError::usage(e.to_string()))?,
        )?,
    ];
    let metrics: Vec<String> = summary
        .rounds
        .first()
        .map(|r| r.eval.keys().cloned().collect())
        .unwrap_or_default();
    let strategy = format!("{:?}", summary.config.strategy).to_lowercase();
    for m in metrics {
        let points = summary
            .rounds
            .iter()
            .map(|r| (r.round as f64, r.eval[&m]))
            .collect();
        let svg = line_chart(
            &m,
            "round",
            &m,
            &[Series {
                name: &strategy,
                points,
            }],
        );
        written.push(write(dir.join(format!("{m}.svg")), &svg)?);
    }
    Ok(written)
}
