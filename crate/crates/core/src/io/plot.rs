//! Minimal SVG line plots.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineStyle {
    Straight,
    /// Each y value holds from its x until the next x.
    Stepped,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Figure {
    pub x_label: String,
    /// Unit of the x data; an SI prefix is chosen for display.
    pub x_unit: String,
    pub y_label: String,
    pub style: LineStyle,
    pub series: Vec<Series>,
}

/// Picks an SI prefix so that `max_abs` displays between 1 and 1000.
fn si_prefix(max_abs: f64) -> (f64, &'static str) {
    const PREFIXES: [(f64, &str); 9] = [
        (1e12, "T"),
        (1e9, "G"),
        (1e6, "M"),
        (1e3, "k"),
        (1.0, ""),
        (1e-3, "m"),
        (1e-6, "µ"),
        (1e-9, "n"),
        (1e-12, "p"),
    ];
    if !(max_abs > 0.0) || !max_abs.is_finite() {
        return (1.0, "");
    }
    for (scale, p) in PREFIXES {
        if max_abs >= scale {
            return (scale, p);
        }
    }
    (1e-12, "p")
}

/// Round tick spacing giving about `n` ticks over `[lo, hi]`.
fn tick_step(lo: f64, hi: f64, n: usize) -> f64 {
    let raw = (hi - lo) / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let m = raw / mag;
    let nice = if m < 1.5 {
        1.0
    } else if m < 3.0 {
        2.0
    } else if m < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = tick_step(lo, hi, 5);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.6}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `fig` as a standalone SVG document.
pub fn render_svg(fig: &Figure) -> String {
    let (x_lo, x_hi) = range(fig.series.iter().flat_map(|s| s.x.iter().copied()));
    let (y_lo, y_hi) = range(fig.series.iter().flat_map(|s| s.y.iter().copied()));
    let pad = 0.05 * (y_hi - y_lo);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);
    let (x_scale, prefix) = si_prefix(x_lo.abs().max(x_hi.abs()));
    let (xd_lo, xd_hi) = (x_lo / x_scale, x_hi / x_scale);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x / x_scale - xd_lo) / (xd_hi - xd_lo) * plot_w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for t in ticks(xd_lo, xd_hi) {
        let x = LEFT + (t - xd_lo) / (xd_hi - xd_lo) * plot_w;
        let yb = TOP + plot_h;
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{yb:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            yb + 5.0,
            yb + 18.0,
            fmt_tick(t)
        );
    }
    for t in ticks(y_lo, y_hi) {
        let y = py(t);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{} ({}{})</text>"#,
        LEFT + 0.5 * plot_w,
        HEIGHT - 15.0,
        escape(&fig.x_label),
        prefix,
        escape(&fig.x_unit)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + 0.5 * plot_h,
        TOP + 0.5 * plot_h,
        escape(&fig.y_label)
    );

    for (i, series) in fig.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut points = Vec::new();
        let n = series.x.len().min(series.y.len());
        for k in 0..n {
            let (x, y) = (series.x[k], series.y[k]);
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            if fig.style == LineStyle::Stepped {
                let x_next = if k + 1 < n {
                    series.x[k + 1]
                } else if k > 0 {
                    x + (x - series.x[k - 1])
                } else {
                    x
                };
                points.push((px(x), py(y)));
                points.push((px(x_next), py(y)));
            } else {
                points.push((px(x), py(y)));
            }
        }
        let mut path = String::new();
        for (x, y) in &points {
            let _ = write!(path, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            path.trim_end(),
            escape(&series.label)
        );
        if fig.series.len() > 1 {
            let ly = TOP + 15.0 + 15.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{ly:.2}" fill="{color}" text-anchor="end">{}</text>"#,
                WIDTH - RIGHT - 10.0,
                escape(&series.label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefixes_and_ticks() {
        assert_eq!(si_prefix(3.6e9), (1e9, "G"));
        assert_eq!(si_prefix(1e-7), (1e-9, "n"));
        assert_eq!(ticks(0.0, 100.0), vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0]);
        assert_eq!(fmt_tick(3.45), "3.45");
    }

    #[test]
    fn stepped_rendering_doubles_points() {
        let fig = Figure {
            x_label: "time".into(),
            x_unit: "s".into(),
            y_label: "rate".into(),
            style: LineStyle::Stepped,
            series: vec![Series {
                label: "h".into(),
                x: vec![0.0, 1e-9, 2e-9],
                y: vec![1.0, 2.0, 1.0],
            }],
        };
        let svg = render_svg(&fig);
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts = line.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 6);
        assert!(svg.contains("time (ns)"));
    }
}
