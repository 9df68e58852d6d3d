//! Minimal SVG line charts: axes with ticks, polylines, scatter markers,
//! filled bands and a legend. Numbers are printed with fixed precision so the
//! output depends only on the data.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone)]
pub enum Series {
    Line { label: String, points: Vec<(f64, f64)> },
    Scatter { label: String, points: Vec<(f64, f64)> },
    /// Filled region between `lower` and `upper`, which share their x values.
    Band { label: String, lower: Vec<(f64, f64)>, upper: Vec<(f64, f64)> },
}

impl Series {
    fn label(&self) -> &str {
        match self {
            Series::Line { label, .. } | Series::Scatter { label, .. } | Series::Band { label, .. } => label,
        }
    }

    fn points(&self) -> Box<dyn Iterator<Item = &(f64, f64)> + '_> {
        match self {
            Series::Line { points, .. } | Series::Scatter { points, .. } => Box::new(points.iter()),
            Series::Band { lower, upper, .. } => Box::new(lower.iter().chain(upper)),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    /// Each entry is drawn in its own color; series sharing a group share it.
    pub groups: Vec<Vec<Series>>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 * (1.0 + lo.abs()) {
            lo -= 0.5;
            hi += 0.5;
        } else {
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, log }
    }

    /// Position in `[0, 1]`, or `None` for values a log axis cannot show.
    fn unit(&self, v: f64) -> Option<f64> {
        let v = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        v.is_finite().then(|| (v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let step = ((b - a) / 8).max(1);
            return (a..=b).step_by(step as usize).map(|e| 10f64.powi(e)).collect();
        }
        let raw = (self.hi - self.lo) / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|i| i as f64 * step).collect()
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if !(1e-3..1e4).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let all = || self.groups.iter().flatten().flat_map(|s| s.points());
        let xa = Axis::fit(all().map(|p| p.0), self.log_x);
        let ya = Axis::fit(all().map(|p| p.1), self.log_y);
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let px = |x: f64| xa.unit(x).map(|u| LEFT + u * pw);
        let py = |y: f64| ya.unit(y).map(|u| TOP + (1.0 - u) * ph);
        let project = |pts: &[(f64, f64)]| -> Vec<(f64, f64)> {
            pts.iter().filter_map(|&(x, y)| Some((px(x)?, py(y)?))).collect()
        };
        let coords = |pts: &[(f64, f64)]| {
            pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect::<Vec<_>>().join(" ")
        };

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(&self.title));

        let _ = writeln!(s, r#"<g class="axes" stroke="black" fill="none">"#);
        let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/>"#);
        s.push_str("</g>\n");
        let _ = writeln!(s, r#"<g class="ticks">"#);
        for t in xa.ticks() {
            if let Some(x) = px(t) {
                let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, TOP, TOP + ph);
                let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, tick_label(t));
            }
        }
        for t in ya.ticks() {
            if let Some(y) = py(t) {
                let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
                let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, tick_label(t));
            }
        }
        s.push_str("</g>\n");
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 16.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let mut legend = Vec::new();
        for (g, group) in self.groups.iter().enumerate() {
            let color = PALETTE[g % PALETTE.len()];
            for series in group {
                let class = match series {
                    Series::Line { .. } => "line",
                    Series::Scatter { .. } => "scatter",
                    Series::Band { .. } => "band",
                };
                let _ = writeln!(s, r#"<g class="series {class}" data-label="{}">"#, escape(series.label()));
                match series {
                    Series::Line { points, .. } => {
                        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords(&project(points)));
                    }
                    Series::Scatter { points, .. } => {
                        for (x, y) in project(points) {
                            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}" fill-opacity="0.45"/>"#);
                        }
                    }
                    Series::Band { lower, upper, .. } => {
                        let mut ring = project(lower);
                        ring.extend(project(upper).into_iter().rev());
                        let _ = writeln!(s, r#"<polygon fill="{color}" fill-opacity="0.2" stroke="none" points="{}"/>"#, coords(&ring));
                    }
                }
                s.push_str("</g>\n");
                legend.push((series.label().to_string(), color, class));
            }
        }

        let _ = writeln!(s, r#"<g class="legend">"#);
        for (i, (label, color, class)) in legend.iter().enumerate() {
            let y = TOP + 10.0 + 20.0 * i as f64;
            let x = WIDTH - RIGHT + 14.0;
            match *class {
                "scatter" => {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#, x + 10.0);
                }
                "band" => {
                    let _ = writeln!(s, r#"<rect x="{x:.2}" y="{:.2}" width="20" height="10" fill="{color}" fill-opacity="0.2"/>"#, y - 5.0);
                }
                _ => {
                    let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#, x + 20.0);
                }
            }
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 26.0, y + 4.0, escape(label));
        }
        s.push_str("</g>\n</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape(r#"a<b & "c">"#), "a&lt;b &amp; &quot;c&quot;&gt;");
    }

    #[test]
    fn log_axis_drops_nonpositive_values() {
        let a = Axis::fit([1e-3, 1.0, 0.0, -2.0].into_iter(), true);
        assert!(a.unit(0.0).is_none());
        assert!(a.unit(1e-3).unwrap() > 0.0 && a.unit(1.0).unwrap() < 1.0);
        assert_eq!(a.ticks(), vec![1e-3, 1e-2, 1e-1, 1.0]);
    }

    #[test]
    fn linear_ticks_are_round() {
        let a = Axis { lo: -0.3, hi: 1.7, log: false };
        assert_eq!(a.ticks(), vec![0.0, 0.5, 1.0, 1.5]);
    }
}
