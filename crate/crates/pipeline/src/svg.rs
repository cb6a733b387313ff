//! Minimal SVG writer. Numbers are printed with fixed precision so output is
//! byte-stable.

use std::fmt::Write;

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

/// Fixed two-decimal coordinate.
fn n(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" { "0.00".into() } else { s }
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height, body: String::new() }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, extra: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"{}/>"#,
            n(x),
            n(y),
            n(w.max(0.0)),
            n(h.max(0.0)),
            attr(extra)
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="{}"/>"#,
            n(x1),
            n(y1),
            n(x2),
            n(y2),
            n(width)
        );
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str, extra: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}"{}/>"#, n(cx), n(cy), n(r), attr(extra));
    }

    /// Closed polygon through `points`.
    pub fn polygon(&mut self, points: &[(f64, f64)], fill: &str, extra: &str) {
        let pts: Vec<String> = points.iter().map(|&(x, y)| format!("{},{}", n(x), n(y))).collect();
        let _ = writeln!(self.body, r#"<polygon points="{}" fill="{fill}"{}/>"#, pts.join(" "), attr(extra));
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        let pts: Vec<String> = points.iter().map(|&(x, y)| format!("{},{}", n(x), n(y))).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{}"/>"#,
            pts.join(" "),
            n(width)
        );
    }

    /// `anchor` is `start`, `middle` or `end`.
    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-size="{}" font-family="sans-serif" text-anchor="{anchor}">{}</text>"#,
            n(x),
            n(y),
            n(size),
            escape(s)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = n(self.width),
            h = n(self.height),
        )
    }
}

fn attr(extra: &str) -> String {
    if extra.is_empty() { String::new() } else { format!(" {extra}") }
}

/// Axis box with tick labels at both ends of each range.
pub struct Axes {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
    pub xr: (f64, f64),
    pub yr: (f64, f64),
}

impl Axes {
    pub fn px(&self, x: f64) -> f64 {
        let span = self.xr.1 - self.xr.0;
        self.x0 + if span > 0.0 { (x - self.xr.0) / span * self.w } else { 0.0 }
    }

    pub fn py(&self, y: f64) -> f64 {
        let span = self.yr.1 - self.yr.0;
        self.y0 + self.h - if span > 0.0 { (y - self.yr.0) / span * self.h } else { 0.0 }
    }

    pub fn draw(&self, svg: &mut Svg, xlabel: &str, ylabel: &str) {
        svg.line(self.x0, self.y0 + self.h, self.x0 + self.w, self.y0 + self.h, "black", 1.0);
        svg.line(self.x0, self.y0, self.x0, self.y0 + self.h, "black", 1.0);
        let fmt = |v: f64| format!("{v:.3}");
        svg.text(self.x0, self.y0 + self.h + 14.0, 10.0, "middle", &fmt(self.xr.0));
        svg.text(self.x0 + self.w, self.y0 + self.h + 14.0, 10.0, "middle", &fmt(self.xr.1));
        svg.text(self.x0 - 4.0, self.y0 + self.h, 10.0, "end", &fmt(self.yr.0));
        svg.text(self.x0 - 4.0, self.y0 + 8.0, 10.0, "end", &fmt(self.yr.1));
        svg.text(self.x0 + self.w / 2.0, self.y0 + self.h + 30.0, 12.0, "middle", xlabel);
        svg.text(self.x0 - 40.0, self.y0 + self.h / 2.0, 12.0, "middle", ylabel);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_formatting() {
        let mut s = Svg::new(10.0, 10.0);
        s.rect(-0.0001, 1.0 / 3.0, 2.0, -1.0, "red", "");
        s.text(1.0, 2.0, 8.0, "start", "a<b & c");
        let out = s.finish();
        assert!(out.contains(r#"<rect x="0.00" y="0.33" width="2.00" height="0.00" fill="red"/>"#));
        assert!(out.contains("a&lt;b &amp; c"));
        assert!(out.starts_with("<svg"));
        assert!(out.ends_with("</svg>\n"));
    }

    #[test]
    fn degenerate_ranges_map_to_origin() {
        let a = Axes { x0: 10.0, y0: 5.0, w: 100.0, h: 50.0, xr: (1.0, 1.0), yr: (0.0, 0.0) };
        assert_eq!(a.px(3.0), 10.0);
        assert_eq!(a.py(3.0), 55.0);
    }
}
