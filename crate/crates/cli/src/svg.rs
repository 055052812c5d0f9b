//! Minimal SVG line charts. Every chart is rendered from data that is also
//! written as CSV next to it.

use std::fmt::Write;

const W: f64 = 800.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Series<'a> {
    pub name: String,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

pub struct Chart<'a> {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series<'a>>,
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Thin out a series to at most `max` points, keeping the extremes of each bucket.
fn decimate(x: &[f64], y: &[f64], max: usize) -> Vec<(f64, f64)> {
    if x.len() <= max {
        return x.iter().copied().zip(y.iter().copied()).collect();
    }
    let bucket = x.len().div_ceil(max / 2);
    let mut out = Vec::with_capacity(max + 2);
    for start in (0..x.len()).step_by(bucket) {
        let end = (start + bucket).min(x.len());
        let (mut imin, mut imax) = (start, start);
        for i in start..end {
            if y[i] < y[imin] {
                imin = i;
            }
            if y[i] > y[imax] {
                imax = i;
            }
        }
        let (a, b) = if imin < imax { (imin, imax) } else { (imax, imin) };
        out.push((x[a], y[a]));
        if b != a {
            out.push((x[b], y[b]));
        }
    }
    out
}

impl Chart<'_> {
    pub fn render(&self) -> String {
        let tx = |v: f64| if self.log_x { v.max(1e-300).log10() } else { v };
        let finite = |v: &f64| v.is_finite();
        let xs = self.series.iter().flat_map(|s| s.x.iter().map(|&v| tx(v))).filter(finite);
        let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let ys = self.series.iter().flat_map(|s| s.y.iter().copied()).filter(finite);
        let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if !y0.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        let pad = ((y1 - y0) * 0.05).max(1e-9 * y0.abs().max(1.0));
        (y0, y1) = (y0 - pad, y1 + pad);
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let px = |v: f64| LEFT + (tx(v) - x0) / (x1 - x0) * pw;
        let py = |v: f64| TOP + (y1 - v) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" font-size="15" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, escape(&self.title));
        let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
        for v in ticks(x0, x1, 5) {
            let x = LEFT + (v - x0) / (x1 - x0) * pw;
            let label = if self.log_x { format!("{:.3e}", 10f64.powf(v)) } else { format!("{v:.4}") };
            let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{}" stroke="#ddd"/>"##, TOP + ph);
            let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{label}</text>"#, TOP + ph + 16.0);
        }
        for v in ticks(y0, y1, 5) {
            let y = py(v);
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/>"##, LEFT + pw);
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.4}</text>"#, LEFT - 6.0, y + 4.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, ser) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let mut path = String::new();
            let mut pen_down = false;
            for (x, y) in decimate(ser.x, ser.y, 4000) {
                if !(x.is_finite() && y.is_finite()) || (self.log_x && x <= 0.0) {
                    pen_down = false;
                    continue;
                }
                let _ = write!(path, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, px(x), py(y));
                pen_down = true;
            }
            let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.trim_end());
            let ly = TOP + 14.0 + 18.0 * k as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&ser.name));
        }
        s.push_str("</svg>\n");
        s
    }
}
