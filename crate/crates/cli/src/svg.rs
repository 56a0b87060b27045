//! Self-contained 800×600 line plots with inline styles.
//!
//! Output depends only on the data: coordinates are printed with fixed
//! precision and series keep their given order.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const TICKS: usize = 5;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_x: bool,
    pub series: Vec<Series<'a>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

impl Plot<'_> {
    pub fn render(&self) -> String {
        let fx = |x: f64| if self.log_x { x.log10() } else { x };
        let usable = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!self.log_x || x > 0.0);
        let (x0, x1) = range(self.series.iter().flat_map(|s| s.points.iter().filter(|p| usable(p)).map(|p| fx(p.0))));
        let (y0, y1) = range(self.series.iter().flat_map(|s| s.points.iter().filter(|p| usable(p)).map(|p| p.1)));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (fx(x) - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" style="fill:#ffffff"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="30" style="font:16px sans-serif;text-anchor:middle">{}</text>"#,
            WIDTH / 2.0,
            escape(self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" style="fill:none;stroke:#333333;stroke-width:1"/>"#
        );
        for k in 0..=TICKS {
            let f = k as f64 / TICKS as f64;
            let px = LEFT + f * pw;
            let xv = x0 + f * (x1 - x0);
            let shown = if self.log_x { 10f64.powf(xv) } else { xv };
            let _ = writeln!(
                out,
                r#"<text x="{px:.1}" y="{:.1}" style="font:11px sans-serif;text-anchor:middle">{}</text>"#,
                TOP + ph + 18.0,
                format_tick(shown)
            );
            let py = TOP + (1.0 - f) * ph;
            let yv = y0 + f * (y1 - y0);
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" style="font:11px sans-serif;text-anchor:end">{}</text>"#,
                LEFT - 6.0,
                py + 4.0,
                format_tick(yv)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{LEFT}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" style="stroke:#dddddd;stroke-width:1"/>"#,
                LEFT + pw
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" style="font:13px sans-serif;text-anchor:middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 20.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="20" y="{:.1}" transform="rotate(-90 20 {:.1})" style="font:13px sans-serif;text-anchor:middle">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(self.y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let colour = COLOURS[k % COLOURS.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|p| usable(p))
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" style="fill:none;stroke:{colour};stroke-width:2"/>"#,
                pts.join(" ")
            );
            let ly = TOP + 16.0 + 18.0 * k as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" style="stroke:{colour};stroke-width:2"/>"#,
                LEFT + pw - 150.0,
                LEFT + pw - 125.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" style="font:12px sans-serif">{}</text>"#,
                LEFT + pw - 118.0,
                ly + 4.0,
                escape(s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn format_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}
