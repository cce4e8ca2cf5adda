//! Log-scale line plots as static SVG, plus the slope fits the sweep
//! summary shares with them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Ordinary least squares `y ≈ slope·x + intercept`. Needs two distinct x.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n != ys.len() || n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        points: n,
    })
}

/// `(x, log10 v)` for the points whose value is finite and positive.
pub fn log10_points(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter(|(x, v)| x.is_finite() && v.is_finite() && *v > 0.0)
        .map(|&(x, v)| (x, v.log10()))
        .collect()
}

/// Least-squares slope of `log10 v` against `x`. If `y ∝ b^x` the slope
/// is `log10 b`.
pub fn log10_slope(points: &[(f64, f64)]) -> Option<LinearFit> {
    let lp = log10_points(points);
    let xs: Vec<f64> = lp.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = lp.iter().map(|p| p.1).collect();
    fit_line(&xs, &ys)
}

pub struct Series {
    pub name: String,
    /// `(x, raw value)`; several points may share an x.
    pub points: Vec<(f64, f64)>,
}

/// Pixel mapping of a plot: data x and `log10 y` to SVG coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlotLayout {
    pub width: f64,
    pub height: f64,
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
    pub x_range: (f64, f64),
    pub log_range: (f64, f64),
}

impl PlotLayout {
    fn fit(series: &[Series]) -> Self {
        let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| log10_points(&s.points)).collect();
        let span = |it: &mut dyn Iterator<Item = f64>| {
            it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let mut xr = span(&mut pts.iter().map(|p| p.0));
        let mut yr = span(&mut pts.iter().map(|p| p.1));
        if !xr.0.is_finite() {
            xr = (0.0, 1.0);
            yr = (0.0, 1.0);
        }
        if xr.0 == xr.1 {
            xr = (xr.0 - 0.5, xr.1 + 0.5);
        }
        if yr.0 == yr.1 {
            yr = (yr.0 - 0.5, yr.1 + 0.5);
        }
        let pad = 0.05 * (yr.1 - yr.0);
        Self {
            width: 720.0,
            height: 460.0,
            left: 70.0,
            right: 220.0,
            top: 30.0,
            bottom: 50.0,
            x_range: xr,
            log_range: (yr.0 - pad, yr.1 + pad),
        }
    }

    pub fn x_px(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        self.left + (x - lo) / (hi - lo) * (self.width - self.left - self.right)
    }

    /// Vertical pixel of a point whose `log10` value is `log_y`.
    pub fn y_px(&self, log_y: f64) -> f64 {
        let (lo, hi) = self.log_range;
        self.height - self.bottom - (log_y - lo) / (hi - lo) * (self.height - self.top - self.bottom)
    }
}

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub struct Rendered {
    pub svg: String,
    pub layout: PlotLayout,
    pub fits: Vec<Option<LinearFit>>,
}

/// One polyline per series through the per-x mean of `log10 y`, raw points
/// as dots, and each series' fitted slope in the legend.
pub fn render_svg(x_label: &str, series: &[Series]) -> Rendered {
    let layout = PlotLayout::fit(series);
    let l = &layout;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        l.width, l.height, l.width, l.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1) = (l.x_px(l.x_range.0), l.x_px(l.x_range.1));
    let (y0, y1) = (l.y_px(l.log_range.0), l.y_px(l.log_range.1));
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.2} {y1:.2} V{y0:.2} H{x1:.2}" fill="none" stroke="black"/>"#
    );
    for k in (l.log_range.0.ceil() as i64)..=(l.log_range.1.floor() as i64) {
        let y = l.y_px(k as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    let mut xs: Vec<f64> = series
        .iter()
        .flat_map(|se| log10_points(&se.points))
        .map(|p| p.0)
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs {
        let px = l.x_px(x);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        l.height - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" transform="rotate(-90 15 {:.2})" text-anchor="middle">log10 scale</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    let mut fits = Vec::new();
    for (i, se) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts = log10_points(&se.points);
        let mut by_x: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
        for &(x, ly) in &pts {
            // Order-preserving key for finite floats.
            let key = x.to_bits() ^ if x < 0.0 { u64::MAX } else { 1 << 63 };
            let e = by_x.entry(key).or_insert((x, 0.0, 0));
            e.1 += ly;
            e.2 += 1;
        }
        let line: Vec<String> = by_x
            .values()
            .map(|&(x, sum, n)| format!("{:.2},{:.2}", l.x_px(x), l.y_px(sum / n as f64)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for &(x, ly) in &pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                l.x_px(x),
                l.y_px(ly)
            );
        }
        let fit = log10_slope(&se.points);
        let label = match fit {
            Some(f) => format!("{} (slope {:.4})", se.name, f.slope),
            None => format!("{} (no fit)", se.name),
        };
        let ly = l.top + 16.0 * i as f64;
        let lx = l.width - l.right + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 18.0,
            lx + 22.0,
            ly + 4.0,
            escape(&label)
        );
        fits.push(fit);
    }
    s.push_str("</svg>\n");
    Rendered { svg: s, layout, fits }
}

/// Reads `x_column` and each of `columns` from a CSV. Rows where a cell
/// is empty or unparsable are skipped for that column only.
pub fn read_series(path: &Path, x_column: &str, columns: &[String]) -> CliResult<Vec<Series>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let headers = rdr.headers().context("cannot read CSV header")?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::usage(anyhow!("column {name:?} not found in {}", path.display())))
    };
    let xi = find(x_column)?;
    let idx: Vec<usize> = columns.iter().map(|c| find(c)).collect::<CliResult<_>>()?;
    let mut series: Vec<Series> = columns
        .iter()
        .map(|c| Series {
            name: c.clone(),
            points: Vec::new(),
        })
        .collect();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("bad CSV row in {}", path.display()))?;
        let Some(x) = rec.get(xi).and_then(|v| v.parse::<f64>().ok()) else {
            continue;
        };
        for (s, &ci) in series.iter_mut().zip(&idx) {
            if let Some(v) = rec.get(ci).and_then(|v| v.parse::<f64>().ok()) {
                s.points.push((x, v));
            }
        }
    }
    Ok(series)
}
