//! Self-contained SVG charts with the plotted numbers embedded as JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Line,
    Loglog,
    Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Style {
    pub color: String,
    pub dashed: bool,
    pub markers: bool,
}

impl Style {
    pub fn solid(color: &str) -> Self {
        Self { color: color.to_string(), dashed: false, markers: true }
    }

    pub fn dashed(color: &str) -> Self {
        Self { color: color.to_string(), dashed: true, markers: false }
    }
}

/// Named `(x, y)` points. For histograms, `x` are bin left edges and `y` densities,
/// with one trailing point giving the right edge of the last bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>, style: Style) -> Self {
        Self { name: name.into(), points, style }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Machine-readable annotations, written to `<metadata>`.
    pub metadata: BTreeMap<String, Value>,
    /// Lines of text drawn in the upper left corner.
    pub notes: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("plot needs at least one nonempty series")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Equal-width density histogram of `samples` on `[lo, hi]`.
pub fn histogram(name: &str, samples: &[f64], lo: f64, hi: f64, bins: usize, style: Style) -> Series {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        if x >= lo && x <= hi && width > 0.0 {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    let total = samples.len().max(1) as f64;
    let mut points: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| (lo + b as f64 * width, c as f64 / (total * width.max(f64::MIN_POSITIVE))))
        .collect();
    points.push((hi, 0.0));
    Series::new(name, points, style)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 * lo.abs().max(1.0) {
            let pad = if log { 0.5 } else { 0.5 * lo.abs().max(1.0) };
            (lo, hi) = (lo - pad, hi + pad);
        }
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
            let step = ((b - a) / 8).max(1);
            (a..=b)
                .step_by(step as usize)
                .filter(|e| f64::from(*e) >= self.lo - 1e-9 && f64::from(*e) <= self.hi + 1e-9)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect()
        } else {
            (0..=5)
                .map(|k| {
                    let v = self.lo + (self.hi - self.lo) * f64::from(k) / 5.0;
                    (v, format!("{:.3}", v))
                })
                .collect()
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// JSON safe to place inside an XML comment.
fn comment_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plot data serializes").replace("--", "-\\u002d")
}

/// Renders the chart. Non-positive values on a log axis are clamped to a floor
/// one decade below the smallest positive value and flagged in the legend.
pub fn render(series: &[Series], kind: PlotKind, spec: &PlotSpec) -> Result<String, PlotError> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(PlotError::Empty);
    }
    let log = kind == PlotKind::Loglog;
    let floor = |sel: fn(&(f64, f64)) -> f64| {
        let min_pos =
            series.iter().flat_map(|s| s.points.iter().map(sel)).filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
        if min_pos.is_finite() {
            min_pos / 10.0
        } else {
            1e-12
        }
    };
    let (fx, fy) = if log { (floor(|p| p.0), floor(|p| p.1)) } else { (0.0, 0.0) };
    let mut clamped = vec![false; series.len()];
    let data: Vec<Vec<(f64, f64)>> = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.points
                .iter()
                .map(|&(x, y)| {
                    if log && (x <= 0.0 || y <= 0.0) {
                        clamped[i] = true;
                        (if x > 0.0 { x } else { fx }, if y > 0.0 { y } else { fy })
                    } else {
                        (x, y)
                    }
                })
                .collect()
        })
        .collect();
    let xa = Axis::fit(data.iter().flatten().map(|p| p.0), log);
    let ya = Axis::fit(
        data.iter().flatten().map(|p| p.1).chain((kind == PlotKind::Histogram).then_some(0.0)),
        log,
    );
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + pw * xa.frac(x);
    let py = |y: f64| TOP + ph * (1.0 - ya.frac(y));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, "<metadata>{}</metadata>", escape(&comment_json(&spec.metadata)));
    let embedded = serde_json::json!({
        "kind": kind,
        "series": series,
        "clamped": clamped,
        "metadata": spec.metadata,
    });
    let _ = writeln!(svg, "<!-- svelab-data\n{}\n-->", comment_json(&embedded));
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(&spec.title));
    let _ = writeln!(
        svg,
        r#"<path d="M{LEFT},{TOP} V{} H{}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for (v, label) in xa.ticks() {
        let x = px(v);
        let _ = writeln!(svg, r#"<path d="M{x:.2},{} v5" stroke="black"/>"#, TOP + ph);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#, TOP + ph + 18.0);
    }
    for (v, label) in ya.ticks() {
        let y = py(v);
        let _ = writeln!(svg, r#"<path d="M{LEFT},{y:.2} h-5" stroke="black"/>"#);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&spec.y_label)
    );

    for (s, pts) in series.iter().zip(&data) {
        if pts.is_empty() {
            continue;
        }
        let dash = if s.style.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let color = escape(&s.style.color);
        if kind == PlotKind::Histogram {
            let mut d = format!("M{:.2},{:.2}", px(pts[0].0), py(0.0));
            for w in pts.windows(2) {
                let _ = write!(d, " V{:.2} H{:.2}", py(w[0].1), px(w[1].0));
            }
            let _ = write!(d, " V{:.2}", py(0.0));
            let _ = writeln!(svg, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#);
        } else {
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                coords.join(" ")
            );
            if s.style.markers {
                for &(x, y) in pts {
                    let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
                }
            }
        }
    }

    for (i, (s, c)) in series.iter().zip(&clamped).enumerate() {
        let y = TOP + 12.0 + 16.0 * i as f64;
        let x = LEFT + pw - 190.0;
        let dash = if s.style.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let label = if *c { format!("{} (clamped to floor)", s.name) } else { s.name.clone() };
        let _ = writeln!(
            svg,
            r#"<path d="M{x:.2},{y:.2} h24" stroke="{}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            escape(&s.style.color),
            x + 30.0,
            y + 4.0,
            escape(&label)
        );
    }
    for (i, note) in spec.notes.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}">{}</text>"#,
            LEFT + 10.0,
            TOP + 14.0 + 16.0 * i as f64,
            escape(note)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Renders and writes the chart to `path`.
pub fn emit_plot(series: &[Series], kind: PlotKind, spec: &PlotSpec, path: &std::path::Path) -> Result<(), PlotError> {
    let svg = render(series, kind, spec)?;
    std::fs::write(path, svg).map_err(|source| PlotError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_has_one_polyline() {
        let s = Series::new("y = x", vec![(1.0, 1.0), (2.0, 2.0)], Style::solid("black"));
        let svg = render(&[s], PlotKind::Line, &PlotSpec::default()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("svelab-data"));
    }

    #[test]
    fn zero_on_log_axis_is_clamped_and_flagged() {
        let s = Series::new("err", vec![(1.0, 0.1), (10.0, 0.0)], Style::solid("red"));
        let svg = render(&[s], PlotKind::Loglog, &PlotSpec::default()).unwrap();
        assert!(svg.contains("err (clamped to floor)"));
        assert!(svg.contains("\"clamped\":[true]"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(render(&[], PlotKind::Line, &PlotSpec::default()), Err(PlotError::Empty)));
    }

    #[test]
    fn histogram_integrates_to_one() {
        let samples: Vec<f64> = (0..1000).map(|i| f64::from(i) / 1000.0).collect();
        let h = histogram("u", &samples, 0.0, 1.0, 10, Style::solid("blue"));
        let mass: f64 = h.points.windows(2).map(|w| (w[1].0 - w[0].0) * w[0].1).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        let svg = render(&[h], PlotKind::Histogram, &PlotSpec::default()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 0);
    }

    #[test]
    fn comment_body_never_closes_early() {
        let s = Series::new("a--b", vec![(0.0, -1.0), (1.0, 1.0)], Style::solid("black"));
        let svg = render(&[s], PlotKind::Line, &PlotSpec::default()).unwrap();
        let body = svg.split("<!-- svelab-data").nth(1).unwrap().split("-->").next().unwrap();
        assert!(!body.contains("--"));
    }
}
