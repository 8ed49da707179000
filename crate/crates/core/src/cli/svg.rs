//! Minimal SVG line and scatter charts for QQ and power plots.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub enum Style {
    Scatter,
    Line,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Draw the `y = x` reference line.
    pub diagonal: bool,
    pub style: Style,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    fn px(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        MARGIN + (x - lo) / (hi - lo) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        HEIGHT - MARGIN - (y - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let (x0, x1) = (self.px(self.x_range.0), self.px(self.x_range.1));
        let (y0, y1) = (self.py(self.y_range.0), self.py(self.y_range.1));
        let _ = writeln!(out, r#"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x_range.0 + f * (self.x_range.1 - self.x_range.0);
            let yv = self.y_range.0 + f * (self.y_range.1 - self.y_range.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#, self.px(xv), y0 + 16.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#, x0 - 6.0, self.py(yv) + 4.0);
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(&self.x_label));
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        if self.diagonal {
            let lo = self.x_range.0.max(self.y_range.0);
            let hi = self.x_range.1.min(self.y_range.1);
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="grey" stroke-dasharray="4 4"/>"#,
                self.px(lo),
                self.py(lo),
                self.px(hi),
                self.py(hi)
            );
        }
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            match self.style {
                Style::Scatter => {
                    for &(x, y) in &s.points {
                        let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="1.8" fill="{color}"/>"#, self.px(x), self.py(y));
                    }
                }
                Style::Line => {
                    let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", self.px(x), self.py(y))).collect();
                    let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
                    for &(x, y) in &s.points {
                        let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{color}"/>"#, self.px(x), self.py(y));
                    }
                }
            }
            let ly = MARGIN + 16.0 * k as f64 + 8.0;
            let _ = writeln!(out, r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/>"#, x0 + 10.0, ly - 9.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, x0 + 26.0, escape(&s.name));
        }
        out.push_str("</svg>\n");
        out
    }
}
