//! Boundary length against degree for radial snakes: ℓ grows like √N.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use super::{build_f, real_line_samples, verify_boxes, waypoints_radial, Boxes, SnakeError, SnakeGrid, Waypoints};
use crate::analysis::{integrate_panels, lsq_slope, simple_curve_check, sup_norm_fn, AnalysisError, CurveSample};
use crate::ratmap::{Complex, RationalMap};

pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub degree: usize,
    pub ell: f64,
    pub sup_norm: f64,
    /// Slope of log ℓ vs log N over the rows up to this one.
    pub slope_partial: Option<f64>,
    pub chord_sum: f64,
    pub ratio: f64,
    pub bound_n: f64,
    pub bound_degree: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub q: f64,
    pub beta_start: f64,
    pub beta: f64,
    pub halvings: usize,
    pub rows: Vec<ScalingRow>,
    pub slope: f64,
    pub slope_in_range: bool,
    pub bounds_hold: bool,
    pub pass: bool,
}

/// `(1/2π)∫_ℝ |f′(x)| dx`: the length of the boundary image, normalised the
/// same way as the circle length `(1/2π)∫_𝕋 |R′||dζ|` of the Cayley-conjugate
/// map (arc length is invariant under the reparametrisation).
pub fn line_length(f: &RationalMap, wp: &Waypoints, tol: f64) -> Result<f64, SnakeError> {
    let q = wp.q;
    let k = wp.a.len() as i32;
    let x0 = q.powi(-2);
    let inner = |x: f64| -> Result<f64, AnalysisError> { Ok(f.deriv(Complex::new(x, 0.0))?.norm()) };
    let breaks: Vec<f64> = (0..=8).map(|t| -x0 + 2.0 * x0 * t as f64 / 8.0).collect();
    let mut total = integrate_panels(&inner, &breaks, tol, 40)?;
    // x = ±e^u beyond x0, up to well past the last pole
    let (u0, u1) = (x0.ln(), q.powi(k + 1).ln() + 40.0);
    let step = 0.5 * q.ln();
    let mut ub = vec![u0];
    while *ub.last().unwrap() < u1 {
        let next = ub.last().unwrap() + step;
        ub.push(next.min(u1));
    }
    for s in [1.0, -1.0] {
        let g = |u: f64| -> Result<f64, AnalysisError> {
            let x = u.exp();
            Ok(f.deriv(Complex::new(s * x, 0.0))?.norm() * x)
        };
        total += integrate_panels(&g, &ub, tol, 40)?;
    }
    Ok(total / (2.0 * PI))
}

/// `max_ℝ |f|` (the limit at ±∞ is the last waypoint).
pub fn line_sup(f: &RationalMap, wp: &Waypoints) -> Result<f64, SnakeError> {
    let q = wp.q;
    let k = wp.a.len() as i32;
    let (u0, u1) = (q.powi(-3).ln(), q.powi(k + 3).ln());
    let samples = 64 * (k as usize + 6);
    let mut best = f.eval(Complex::new(0.0, 0.0))?.norm().max(wp.w.last().unwrap().norm());
    for s in [1.0, -1.0] {
        let g = |u: f64| -> Result<f64, AnalysisError> { Ok(f.eval(Complex::new(s * u.exp(), 0.0))?.norm()) };
        best = best.max(sup_norm_fn(g, u0, u1, samples, false)?);
    }
    Ok(best)
}

fn radial_ok(n: usize, beta: f64, q: f64, grid: &SnakeGrid) -> bool {
    let Ok(wp) = waypoints_radial(n, beta, q) else { return false };
    let Ok(f) = build_f(&wp) else { return false };
    let boxes = Boxes::new(&wp);
    if !verify_boxes(&f, &wp, &boxes, grid).pass {
        return false;
    }
    let xs = real_line_samples(&wp, 32);
    let Ok(pts) = xs.iter().map(|&x| f.eval(Complex::new(x, 0.0))).collect::<Result<Vec<_>, _>>() else {
        return false;
    };
    CurveSample::new(pts, true, xs).is_ok_and(|c| simple_curve_check(&c).simple)
}

/// One common β for every N: halve from `beta` until all radial snakes
/// pass the box checks and the simple-curve check.
pub fn calibrate_beta(ns: &[usize], beta: f64, q: f64, grid: &SnakeGrid) -> Result<(f64, usize), SnakeError> {
    let mut b = beta;
    for halvings in 0..=MAX_HALVINGS {
        if ns.par_iter().all(|&n| radial_ok(n, b, q, grid)) {
            return Ok((b, halvings));
        }
        b *= 0.5;
    }
    Err(SnakeError::BetaExhausted(MAX_HALVINGS))
}

pub fn scaling_experiment(ns: &[usize], beta: f64, q: f64, tol: f64) -> Result<ScalingReport, SnakeError> {
    if ns.len() < 2 {
        return Err(SnakeError::InvalidConfig("need at least two N values".into()));
    }
    if let Some(&n) = ns.iter().find(|&&n| n < 16) {
        return Err(SnakeError::InvalidConfig(format!("N = {n} must be at least 16")));
    }
    let grid = SnakeGrid { per_window: 64, semicircle: 64 };
    let (b, halvings) = calibrate_beta(ns, beta, q, &grid)?;
    let mut rows = ns
        .par_iter()
        .map(|&n| -> Result<ScalingRow, SnakeError> {
            let wp = waypoints_radial(n, b, q)?;
            let f = build_f(&wp)?;
            let ell = line_length(&f, &wp, tol)?;
            let sup = line_sup(&f, &wp)?;
            let degree = f.degree();
            Ok(ScalingRow {
                n,
                degree,
                ell,
                sup_norm: sup,
                slope_partial: None,
                chord_sum: wp.chord_sum(),
                ratio: ell / sup,
                bound_n: 6.0 * PI * (n as f64).sqrt(),
                bound_degree: 6.0 * PI * (degree as f64).sqrt(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    for i in 1..rows.len() {
        let xs: Vec<f64> = rows[..=i].iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = rows[..=i].iter().map(|r| r.ell.ln()).collect();
        rows[i].slope_partial = Some(lsq_slope(&xs, &ys));
    }
    let slope = rows.last().and_then(|r| r.slope_partial).unwrap_or(f64::NAN);
    let slope_in_range = (0.4..=0.6).contains(&slope);
    let bounds_hold = rows.iter().all(|r| r.ratio <= r.bound_n && r.ratio <= r.bound_degree);
    Ok(ScalingReport { q, beta_start: beta, beta: b, halvings, rows, slope, slope_in_range, bounds_hold, pass: slope_in_range && bounds_hold })
}

pub fn scaling_csv(report: &ScalingReport) -> String {
    let mut out = String::from("N,degree,ell,sup_norm,slope_partial\n");
    for r in &report.rows {
        let sp = r.slope_partial.map(|s| format!("{s:.6}")).unwrap_or_default();
        out.push_str(&format!("{},{},{:.10},{:.10},{}\n", r.n, r.degree, r.ell, r.sup_norm, sp));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_of_single_chord() {
        // f = a·x/(x+iy) traces a semicircle-like arc; ∫|f′| = |a|·y∫dx/(x²+y²) = π|a|
        let wp = Waypoints::from_points(vec![Complex::new(0.0, 0.0), Complex::new(0.4, 0.0)], 3.0, 0.5, 16.0).unwrap();
        let f = build_f(&wp).unwrap();
        let ell = line_length(&f, &wp, 1e-10).unwrap();
        assert!((ell - 0.4 * PI / (2.0 * PI)).abs() < 1e-8, "{ell}");
        let sup = line_sup(&f, &wp).unwrap();
        // |a·x/(x+iy)| = |a|·|x|/√(x²+y²) < |a|, approached at ±∞
        assert!((sup - 0.4).abs() < 1e-12);
    }

    #[test]
    fn small_scaling_run() {
        let rep = scaling_experiment(&[16, 32, 64], 0.5, 3.0, 1e-9).unwrap();
        assert!(rep.bounds_hold);
        for r in &rep.rows {
            assert!(r.chord_sum >= 0.3 * rep.beta * (r.n as f64).sqrt());
        }
        let csv = scaling_csv(&rep);
        assert!(csv.starts_with("N,degree,ell,sup_norm,slope_partial\n16,14,"));
    }
}
