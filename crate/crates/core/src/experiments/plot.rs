use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Which columns to plot. An empty or absent `group` gives one series.
#[derive(Clone, Debug, Default)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    pub group: Option<String>,
}

/// Per-`x` mean and standard deviation of `y` for one group.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64, f64)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

/// Groups rows of `csv_path` and aggregates `y` per distinct `x`.
pub fn load_series(csv_path: &Path, spec: &PlotSpec) -> Result<Vec<Series>> {
    let mut rdr = csv::Reader::from_path(csv_path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let xi = find(&spec.x)?;
    let yi = find(&spec.y)?;
    let gi = match spec.group.as_deref().filter(|g| !g.is_empty()) {
        Some(g) => Some(find(g)?),
        None => None,
    };

    let mut groups: BTreeMap<String, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (Ok(x), Ok(y)) = (rec[xi].trim().parse::<f64>(), rec[yi].trim().parse::<f64>()) else {
            continue;
        };
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        let name = gi.map(|g| rec[g].to_string()).unwrap_or_default();
        // Keyed by an order-preserving bit pattern so equal x values merge.
        let key = if x >= 0.0 { x.to_bits() ^ (1 << 63) } else { !x.to_bits() };
        groups.entry(name).or_default().entry(key).or_insert((x, Vec::new())).1.push(y);
    }
    Ok(groups
        .into_iter()
        .map(|(name, by_x)| Series {
            name,
            points: by_x
                .into_values()
                .map(|(x, ys)| {
                    let n = ys.len() as f64;
                    let mean = ys.iter().sum::<f64>() / n;
                    let var = if ys.len() > 1 { ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
                    (x, mean, var.sqrt())
                })
                .collect(),
        })
        .collect())
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG line plot of the series, with mean ± std bands.
pub fn render_svg(series: &[Series], spec: &PlotSpec) -> String {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, s) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - s);
        y1 = y1.max(m + s);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 - y0 <= 0.0 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<g stroke="black" fill="none"><line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}"/></g>"#,
        b = TOP + ph,
        r = LEFT + pw
    );
    for t in ticks(x0, x1) {
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{b5}" stroke="black"/><text x="{x:.2}" y="{bt}" text-anchor="middle">{}</text>"#,
            fmt_num(t),
            x = sx(t),
            b = TOP + ph,
            b5 = TOP + ph + 5.0,
            bt = TOP + ph + 18.0
        );
    }
    for t in ticks(y0, y1) {
        let _ = writeln!(
            svg,
            r#"<line x1="{l5}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{lt}" y="{yt:.2}" text-anchor="end">{}</text>"#,
            fmt_num(t),
            l5 = LEFT - 5.0,
            lt = LEFT - 8.0,
            y = sy(t),
            yt = sy(t) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{cx}" y="{by}" text-anchor="middle">{}</text>"#,
        escape(&spec.x),
        cx = LEFT + pw / 2.0,
        by = HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{cy}" text-anchor="middle" transform="rotate(-90 16 {cy})">{}</text>"#,
        escape(&spec.y),
        cy = TOP + ph / 2.0
    );

    for (gi, s) in series.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        let upper: Vec<String> = s.points.iter().map(|&(x, m, sd)| format!("{:.2},{:.2}", sx(x), sy(m + sd))).collect();
        let lower: Vec<String> = s.points.iter().rev().map(|&(x, m, sd)| format!("{:.2},{:.2}", sx(x), sy(m - sd))).collect();
        let _ = writeln!(
            svg,
            r#"<polygon class="band" points="{} {}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = s.points.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", sx(x), sy(m))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let label = if s.name.is_empty() { spec.y.clone() } else { format!("{} = {}", spec.group.as_deref().unwrap_or(""), s.name) };
        let ly = TOP + 10.0 + 18.0 * gi as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{lx2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{lt}" y="{lyt}">{}</text>"#,
            escape(&label),
            lx2 = lx + 20.0,
            lt = lx + 26.0,
            lyt = ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Default output path: `<stem>_<y>_vs_<x>.svg` next to the CSV.
pub fn default_svg_path(csv_path: &Path, spec: &PlotSpec) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "plot".into());
    csv_path.with_file_name(format!("{stem}_{}_vs_{}.svg", spec.y, spec.x))
}

/// Writes the plot and returns its path.
pub fn plot_csv(csv_path: &Path, spec: &PlotSpec, out: Option<&Path>) -> Result<PathBuf> {
    let series = load_series(csv_path, spec)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| default_svg_path(csv_path, spec));
    std::fs::write(&path, render_svg(&series, spec))?;
    Ok(path)
}
