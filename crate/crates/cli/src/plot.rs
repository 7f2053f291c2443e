//! Learning-curve SVG: per-step mean across seeds with a ±1 sample-std band
//! and an optional dashed reference line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use oodrl_core::harness::{mean, read_metrics, sample_std, MetricsRow, METRICS_FILE};
use oodrl_core::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Number of seeds behind each point.
    pub runs: usize,
}

fn metric_value(row: &MetricsRow, metric: &str) -> Result<f64> {
    let v = match metric {
        "raw_return" => Some(row.raw_return),
        "zeroed_return" => Some(row.zeroed_return),
        "mean_du" => row.mean_du,
        "in_dist_frac" => Some(row.in_dist_frac),
        "kl_to_org" => row.kl_to_org,
        "seconds" => Some(row.seconds),
        _ => return Err(Error::Config(format!("unknown metric `{metric}`"))),
    };
    Ok(v.unwrap_or(f64::NAN))
}

/// Metrics files under `path`: the file itself, `path/metrics.csv`, or
/// `path/seed_*/metrics.csv` in name order.
pub fn metrics_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if path.join(METRICS_FILE).is_file() {
        return Ok(vec![path.join(METRICS_FILE)]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("seed_"))
        .map(|e| e.path().join(METRICS_FILE))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no metrics found under {}", path.display())));
    }
    Ok(files)
}

/// Mean and sample standard deviation of `metric` across runs, step by step.
/// All runs must share their evaluation steps.
pub fn aggregate(label: &str, runs: &[Vec<MetricsRow>], metric: &str) -> Result<Series> {
    let first = runs.first().ok_or_else(|| Error::Config("no runs to aggregate".into()))?;
    let steps: Vec<u64> = first.iter().map(|r| r.step).collect();
    for run in runs {
        if run.iter().map(|r| r.step).ne(steps.iter().copied()) {
            return Err(Error::Config(format!("runs of {label} are evaluated at different steps")));
        }
    }
    let mut series = Series {
        label: label.to_string(),
        steps,
        mean: Vec::new(),
        std: Vec::new(),
        runs: runs.len(),
    };
    for i in 0..series.steps.len() {
        let values = runs.iter().map(|r| metric_value(&r[i], metric)).collect::<Result<Vec<_>>>()?;
        series.mean.push(mean(&values));
        series.std.push(sample_std(&values));
    }
    Ok(series)
}

pub fn load_series(path: &Path, metric: &str) -> Result<Series> {
    let runs = metrics_files(path)?
        .iter()
        .map(|f| read_metrics(f))
        .collect::<Result<Vec<_>>>()?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    aggregate(&label, &runs, metric)
}

/// A literal number, or the mean final raw return of the runs under a path.
pub fn resolve_baseline(spec: &str) -> Result<f64> {
    if let Ok(v) = spec.parse::<f64>() {
        return Ok(v);
    }
    let finals = metrics_files(Path::new(spec))?
        .iter()
        .map(|f| {
            read_metrics(f)?
                .last()
                .map(|r| r.raw_return)
                .ok_or_else(|| Error::Config(format!("{} has no rows", f.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&finals))
}

pub fn unix_time() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn join(xs: impl Iterator<Item = String>) -> String {
    xs.collect::<Vec<_>>().join(" ")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// The exact aggregates are carried in `data-*` attributes of each series
/// group so the figure can be checked against its inputs.
pub fn render_svg(series: &[Series], baseline: Option<f64>, title: &str, timestamp: Option<u64>) -> String {
    let finite = |v: &f64| v.is_finite();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for (m, d) in s.mean.iter().zip(&s.std).filter(|(m, _)| finite(m)) {
            let d = if d.is_finite() { *d } else { 0.0 };
            lo = lo.min(m - d);
            hi = hi.max(m + d);
        }
    }
    if let Some(b) = baseline.filter(finite) {
        lo = lo.min(b);
        hi = hi.max(b);
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let max_step = series.iter().flat_map(|s| s.steps.iter().copied()).max().unwrap_or(1).max(1) as f64;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |step: u64| LEFT + plot_w * step as f64 / max_step;
    let y = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    if let Some(t) = timestamp {
        let _ = writeln!(svg, "<metadata>generated-unix-time {t}</metadata>");
    }
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (LEFT, LEFT + plot_w, TOP, TOP + plot_h);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0:.2} {y0:.2} L{x0:.2} {y1:.2} L{x1:.2} {y1:.2}" stroke="dimgray" fill="none"/>"#
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.2}</text>"#,
            x0 - 6.0,
            yy + 4.0
        );
        let s = (max_step * k as f64 / 4.0).round() as u64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{s}</text>"#,
            x(s),
            y1 + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">step</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            svg,
            r#"<g class="series" data-label="{}" data-runs="{}" data-steps="{}" data-mean="{}" data-std="{}">"#,
            escape(&s.label),
            s.runs,
            join(s.steps.iter().map(u64::to_string)),
            join(s.mean.iter().map(f64::to_string)),
            join(s.std.iter().map(f64::to_string)),
        );
        let pts: Vec<(u64, f64, f64)> = s
            .steps
            .iter()
            .zip(s.mean.iter().zip(&s.std))
            .filter(|(_, (m, _))| m.is_finite())
            .map(|(&st, (&m, &d))| (st, m, if d.is_finite() { d } else { 0.0 }))
            .collect();
        let upper = pts.iter().map(|&(st, m, d)| format!("{:.2},{:.2}", x(st), y(m + d)));
        let lower = pts.iter().rev().map(|&(st, m, d)| format!("{:.2},{:.2}", x(st), y(m - d)));
        let _ = writeln!(
            svg,
            r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            join(upper.chain(lower))
        );
        let line = pts.iter().map(|&(st, m, _)| format!("{:.2},{:.2}", x(st), y(m)));
        let _ = writeln!(
            svg,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            join(line)
        );
        let ly = TOP + 16.0 + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            x1 + 14.0,
            x1 + 34.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            x1 + 40.0,
            ly + 4.0,
            escape(&s.label)
        );
        let _ = writeln!(svg, "</g>");
    }
    if let Some(b) = baseline.filter(finite) {
        let _ = writeln!(
            svg,
            r#"<line class="baseline" data-value="{b}" x1="{x0:.2}" y1="{yb:.2}" x2="{x1:.2}" y2="{yb:.2}" stroke="black" stroke-width="1.5" stroke-dasharray="6 4"/>"#,
            yb = y(b)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
