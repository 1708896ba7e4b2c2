//! Minimal static SVG line charts.
//!
//! Every input point is drawn (no resampling). The root element carries the
//! data→pixel map as `data-*` attributes so a plot can be checked against the
//! table it came from.

use std::fmt::Write;

pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plot `log10 x` (non-positive `x` are dropped).
    pub log_x: bool,
    pub series: Vec<Series>,
}

const W: f64 = 800.0;
const H: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-300_f64.max(1e-12 * lo.abs()) {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

impl Chart {
    /// Finite points actually drawn for series `i`, in plot coordinates (`x` already log-mapped).
    pub fn points(&self, i: usize) -> Vec<(f64, f64)> {
        let s = &self.series[i];
        s.x.iter()
            .zip(&s.y)
            .filter_map(|(&x, &y)| {
                let x = if self.log_x {
                    if x > 0.0 {
                        x.log10()
                    } else {
                        return None;
                    }
                } else {
                    x
                };
                (x.is_finite() && y.is_finite()).then_some((x, y))
            })
            .collect()
    }

    pub fn render(&self) -> String {
        let pts: Vec<Vec<(f64, f64)>> = (0..self.series.len()).map(|i| self.points(i)).collect();
        let (x0, x1) = range(pts.iter().flatten().map(|p| p.0));
        let (y0, y1) = range(pts.iter().flatten().map(|p| p.1));
        let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" data-x0="{x0:e}" data-x1="{x1:e}" data-y0="{y0:e}" data-y1="{y1:e}" data-left="{LEFT}" data-top="{TOP}" data-width="{pw}" data-height="{ph}" data-log-x="{}">"#,
            self.log_x
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, esc(&self.title));
        let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
        for t in ticks(x0, x1) {
            let x = px(t);
            let label = if self.log_x { format!("1e{t}") } else { format!("{t}") };
            let _ = writeln!(s, r##"<line x1="{x:.3}" y1="{}" x2="{x:.3}" y2="{}" stroke="#ddd"/>"##, TOP, TOP + ph);
            let _ = writeln!(s, r#"<text x="{x:.3}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{label}</text>"#, TOP + ph + 16.0);
        }
        for t in ticks(y0, y1) {
            let y = py(t);
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.3}" x2="{}" y2="{y:.3}" stroke="#ddd"/>"##, LEFT + pw);
            let _ = writeln!(s, r#"<text x="{}" y="{:.3}" font-family="sans-serif" font-size="11" text-anchor="end">{t}</text>"#, LEFT - 6.0, y + 4.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 16.0, esc(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            esc(&self.y_label)
        );
        for (i, (series, p)) in self.series.iter().zip(&pts).enumerate() {
            let color = COLORS[i % COLORS.len()];
            let mut coords = String::new();
            for (x, y) in p {
                let _ = write!(coords, "{:.4},{:.4} ", px(*x), py(*y));
            }
            let _ = writeln!(
                s,
                r#"<polyline data-name="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                esc(&series.name),
                coords.trim_end()
            );
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#, lx + 26.0, ly + 4.0, esc(&series.name));
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_finite_points_drawn() {
        let c = Chart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: true,
            series: vec![Series { name: "a".into(), x: vec![0.0, 1.0, 10.0, 100.0], y: vec![1.0, 2.0, f64::NAN, 3.0] }],
        };
        let svg = c.render();
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(line.matches(',').count(), 2);
        assert!(svg.contains(r#"data-x0="0e0""#) && svg.contains(r#"data-x1="2e0""#));
    }
}
