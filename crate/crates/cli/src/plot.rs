//! Minimal SVG line plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub x: f64,
    pub y: f64,
    /// Distance of the error bar below `y`.
    pub lo: f64,
    /// Distance of the error bar above `y`.
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<SeriesPoint>,
    pub dashed: bool,
}

impl Series {
    /// Reads a capacity-curve CSV (`d_over_r0,capacity_bits,err_lo,err_hi,...`).
    pub fn from_curve_csv(path: &Path, label: impl Into<String>, dashed: bool) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(e.to_string()))?;
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| CliError::Config(e.to_string()))?;
            let num = |i: usize| -> Result<f64, CliError> {
                rec.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| CliError::Config(format!("{}: bad field {i}", path.display())))
            };
            points.push(SeriesPoint {
                x: num(0)?,
                y: num(1)?,
                lo: num(2)?,
                hi: num(3)?,
            });
        }
        Ok(Self {
            label: label.into(),
            points,
            dashed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_x: bool,
}

impl Frame {
    fn tx(&self, x: f64) -> f64 {
        let (a, b, v) = if self.log_x {
            (self.x0.log10(), self.x1.log10(), x.log10())
        } else {
            (self.x0, self.x1, x)
        };
        LEFT + (v - a) / (b - a) * (WIDTH - LEFT - RIGHT)
    }

    fn ty(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let m = raw / mag;
    let k = if m < 1.5 {
        1.0
    } else if m < 3.5 {
        2.0
    } else if m < 7.5 {
        5.0
    } else {
        10.0
    };
    k * mag
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn render(&self) -> String {
        let pts = self.series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for p in pts {
            if self.log_x && p.x <= 0.0 {
                continue;
            }
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            ymax = ymax.max(p.y + p.hi);
        }
        if !x0.is_finite() || x1 <= x0 {
            (x0, x1) = if self.log_x { (0.1, 10.0) } else { (0.0, 1.0) };
        }
        if ymax <= 0.0 {
            ymax = 1.0;
        }
        let step = nice_step(ymax * 1.05);
        let frame = Frame {
            x0,
            x1,
            y0: 0.0,
            y1: (ymax * 1.05 / step).ceil() * step,
            log_x: self.log_x,
        };

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            escape(&self.title)
        );
        let (px0, px1) = (LEFT, WIDTH - RIGHT);
        let (py0, py1) = (HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            svg,
            r#"<rect x="{px0:.2}" y="{py1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            px1 - px0,
            py0 - py1
        );

        // x ticks
        let mut xticks = Vec::new();
        if self.log_x {
            let mut e = x0.log10().floor() as i32;
            while 10f64.powi(e) <= x1 * (1.0 + 1e-12) {
                let v = 10f64.powi(e);
                if v >= x0 * (1.0 - 1e-12) {
                    xticks.push(v);
                }
                e += 1;
            }
        } else {
            let s = nice_step(x1 - x0);
            let mut v = (x0 / s).ceil() * s;
            while v <= x1 + 1e-12 * s {
                xticks.push(v);
                v += s;
            }
        }
        for v in xticks {
            let x = frame.tx(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{py0:.2}" x2="{x:.2}" y2="{py1:.2}" stroke="#dddddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                py0 + 16.0,
                tick_label(v)
            );
        }
        let mut v = 0.0;
        while v <= frame.y1 + 1e-9 * step {
            let y = frame.ty(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{px0:.2}" y1="{y:.2}" x2="{px1:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                px0 - 6.0,
                y + 4.0,
                tick_label(v)
            );
            v += step;
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (px0 + px1) / 2.0,
            HEIGHT - 18.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            (py0 + py1) / 2.0,
            (py0 + py1) / 2.0,
            escape(&self.y_label)
        );

        for (i, s) in self.series.iter().enumerate() {
            let colour = if s.dashed { "black" } else { PALETTE[i % PALETTE.len()] };
            let dash = if s.dashed { r#" stroke-dasharray="3,4""# } else { "" };
            let coords: Vec<String> = s
                .points
                .iter()
                .filter(|p| !self.log_x || p.x > 0.0)
                .map(|p| format!("{:.2},{:.2}", frame.tx(p.x), frame.ty(p.y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.8"{dash} points="{}"/>"#,
                coords.join(" ")
            );
            for p in s.points.iter().filter(|p| (p.lo > 0.0 || p.hi > 0.0) && (!self.log_x || p.x > 0.0)) {
                let x = frame.tx(p.x);
                let _ = writeln!(
                    svg,
                    r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{colour}"/>"#,
                    frame.ty(p.y - p.lo),
                    frame.ty(p.y + p.hi)
                );
            }
            let ly = TOP + 14.0 + 20.0 * i as f64;
            let lx = WIDTH - RIGHT + 16.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="1.8"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 24.0,
                lx + 30.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}
