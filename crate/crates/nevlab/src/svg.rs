//! Standalone SVG output: polylines only, viewBox fitted with a 5% margin.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::ratmap::Complex;

#[derive(Debug, Clone)]
pub struct Polyline {
    pub points: Vec<Complex>,
    pub closed: bool,
}

impl Polyline {
    pub fn open(points: Vec<Complex>) -> Self {
        Self { points, closed: false }
    }

    pub fn closed(points: Vec<Complex>) -> Self {
        Self { points, closed: true }
    }
}

/// Render polylines in the given order. `stroke` is in drawing units; the
/// y axis is flipped so the picture has the usual orientation.
pub fn render(lines: &[Polyline], stroke: f64) -> io::Result<String> {
    let pts = lines.iter().flat_map(|l| l.points.iter());
    let (mut lo, mut hi) = (Complex::new(f64::INFINITY, f64::INFINITY), Complex::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    let mut any = false;
    for p in pts {
        if !(p.re.is_finite() && p.im.is_finite()) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "non-finite point in SVG geometry"));
        }
        any = true;
        lo = Complex::new(lo.re.min(p.re), lo.im.min(p.im));
        hi = Complex::new(hi.re.max(p.re), hi.im.max(p.im));
    }
    if !any {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "empty geometry"));
    }
    let size = (hi.re - lo.re).max(hi.im - lo.im).max(1e-12);
    let m = 0.05 * size;
    let (x0, y0) = (lo.re - m, -hi.im - m);
    let (w, h) = (hi.re - lo.re + 2.0 * m, hi.im - lo.im + 2.0 * m);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0:.6} {y0:.6} {w:.6} {h:.6}" width="800" height="{:.0}">"#,
        800.0 * h / w
    );
    for l in lines {
        let _ = write!(out, r#"<polyline fill="none" stroke="black" stroke-width="{stroke:.6e}" points=""#);
        let close = l.points.first().filter(|_| l.closed);
        for (k, p) in l.points.iter().chain(close).enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.6},{:.6}", p.re, -p.im);
        }
        out.push_str("\"/>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_svg(lines: &[Polyline], stroke: f64, path: &Path) -> io::Result<()> {
    let doc = render(lines, stroke)?;
    std::fs::write(path, doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_document() {
        let pts: Vec<Complex> = (0..256).map(|k| Complex::from_polar(1.0, k as f64 * 0.0245436926)).collect();
        let s = render(&[Polyline::closed(pts.clone())], 0.01).unwrap();
        assert_eq!(s.matches("<polyline").count(), 1);
        assert!(s.contains(r#"viewBox="-1.100000 -1.100000 2.200000 2.200000""#), "{s}");
        assert_eq!(s, render(&[Polyline::closed(pts)], 0.01).unwrap());
        assert!(render(&[], 0.01).is_err());
        assert!(render(&[Polyline::open(vec![])], 0.01).is_err());
    }
}
