//! Log-kernel needle `G(z) = (b²/2)·log((b−z)/(a−z))`, `a = b/N²`, and its
//! rational Simpson discretisation `F`.
//!
//! Adding `F` to a conformal map grows a thin spike of height `b²·log N`
//! along the positive real axis out of the left half-plane.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::ratmap::{Complex, MapError, RationalMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeedleError {
    #[error("invalid needle parameters: {0}")]
    InvalidParams(String),
    #[error("{z} lies on the branch cut [{lo}, {hi}]")]
    BranchCut { z: Complex, lo: f64, hi: f64 },
    #[error("grid too coarse: {0} points per region, need at least 64")]
    GridTooCoarse(usize),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeedleParams {
    pub b: f64,
    pub n: usize,
    pub eps: f64,
}

impl NeedleParams {
    pub fn new(b: f64, n: usize, eps: f64) -> Result<Self, NeedleError> {
        let p = Self { b, n, eps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), NeedleError> {
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(NeedleError::InvalidParams(format!("b = {} not in (0,1)", self.b)));
        }
        if self.n < 2 {
            return Err(NeedleError::InvalidParams(format!("N = {} < 2", self.n)));
        }
        if !(self.eps >= 0.0 && 3.0 * self.eps < 1.0) {
            return Err(NeedleError::InvalidParams(format!("eps = {} outside [0, 1/3)", self.eps)));
        }
        Ok(())
    }

    /// Lower end `b/N²` of the support segment.
    pub fn a(&self) -> f64 {
        self.b / (self.n * self.n) as f64
    }

    /// Needle height `G(0) = b²·log N`.
    pub fn height(&self) -> f64 {
        self.b * self.b * (self.n as f64).ln()
    }
}

fn check_cut(p: &NeedleParams, z: Complex) -> Result<(), NeedleError> {
    let (lo, hi) = (p.a(), p.b);
    let g = 1e-13 * (1.0 + z.norm());
    if z.im.abs() < g && z.re >= lo - g && z.re <= hi + g {
        return Err(NeedleError::BranchCut { z, lo, hi });
    }
    Ok(())
}

pub fn eval_g(p: &NeedleParams, z: Complex) -> Result<Complex, NeedleError> {
    check_cut(p, z)?;
    let q = (p.b - z) / (p.a() - z);
    Ok(0.5 * p.b * p.b * q.ln())
}

pub fn eval_g_deriv(p: &NeedleParams, z: Complex) -> Result<Complex, NeedleError> {
    check_cut(p, z)?;
    Ok(0.5 * p.b * p.b * (1.0 / (p.a() - z) - 1.0 / (p.b - z)))
}

/// Simpson's rule on `[α, β]` from values at `α`, the midpoint and `β`.
pub fn simpson_segment(f: [f64; 3], alpha: f64, beta: f64) -> f64 {
    (beta - alpha) / 6.0 * (f[0] + 4.0 * f[1] + f[2])
}

pub fn simpson_error_bound(alpha: f64, beta: f64, f4max: f64) -> f64 {
    (beta - alpha).powi(5) / 2880.0 * f4max
}

/// Subinterval `k` (2 ≤ k ≤ N) is `[b/k², b/(k−1)²]`.
fn interval(b: f64, k: usize) -> (f64, f64) {
    let k = k as f64;
    (b / (k * k), b / ((k - 1.0) * (k - 1.0)))
}

/// Simpson nodes and weights `(node, weight)`, shared endpoints merged,
/// ordered from the tip `b` inwards.
pub fn nodes_and_weights(p: &NeedleParams) -> Vec<(f64, f64)> {
    let b = p.b;
    let scale = b * b / 12.0;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(2 * p.n);
    for k in 2..=p.n {
        let (lo, hi) = interval(b, k);
        let h = hi - lo;
        let w_end = scale * h;
        if k == 2 {
            out.push((hi, w_end));
        } else {
            // right end coincides with the previous interval's left end
            out.last_mut().expect("previous node").1 += w_end;
        }
        out.push((0.5 * (lo + hi), 4.0 * w_end));
        out.push((lo, w_end));
    }
    out
}

/// The rational needle `F(z) = Σ c_k/(w_k − z)` stored as terms
/// `(−c_k)/(z − w_k)`.
pub fn build_needle(p: &NeedleParams) -> Result<RationalMap, NeedleError> {
    p.validate()?;
    let mut m = RationalMap::default();
    for (w, c) in nodes_and_weights(p) {
        m.push(Complex::new(-c, 0.0), Complex::new(w, 0.0), 1)?;
    }
    Ok(m)
}

/// Positive weights `c_k` and poles `w_k` of a needle built here.
pub fn weights_of(f: &RationalMap) -> Vec<(f64, f64)> {
    f.terms.iter().map(|t| (-t.coeff.re, t.pole.re)).collect()
}

fn dist_to_interval(z: Complex, lo: f64, hi: f64) -> f64 {
    let x = z.re.clamp(lo, hi);
    (z - Complex::new(x, 0.0)).norm()
}

/// Per-point quadrature budgets `(|G−F| bound, |G′−F′| bound)` obtained by
/// summing the Simpson error bound over all subintervals, with the fourth
/// derivative of `1/(t−z)` (resp. `1/(t−z)²`) bounded by its value at the
/// closest point of the subinterval.
pub fn simpson_budget(p: &NeedleParams, z: Complex) -> (f64, f64) {
    let half = 0.5 * p.b * p.b;
    let (mut e0, mut e1) = (0.0, 0.0);
    for k in 2..=p.n {
        let (lo, hi) = interval(p.b, k);
        let d = dist_to_interval(z, lo, hi);
        e0 += half * simpson_error_bound(lo, hi, 24.0 / d.powi(5));
        e1 += half * simpson_error_bound(lo, hi, 120.0 / d.powi(6));
    }
    (e0, e1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeedleGrid {
    pub per_region: usize,
    pub gamma_samples: usize,
}

impl Default for NeedleGrid {
    fn default() -> Self {
        Self { per_region: 256, gamma_samples: 64 }
    }
}

impl NeedleGrid {
    pub fn with_points(per_region: usize) -> Self {
        Self { per_region, ..Self::default() }
    }

    /// The three test regions: the half circle `|z| = b` in ℂ_L, the
    /// segment `[−4i, 4i]`, and the half circle `|z| = 2b` in ℂ_L.
    pub fn regions(&self, b: f64) -> Result<[Vec<Complex>; 3], NeedleError> {
        let n = self.per_region;
        if n < 64 {
            return Err(NeedleError::GridTooCoarse(n));
        }
        let arc = |r: f64| -> Vec<Complex> {
            (0..n).map(|k| Complex::from_polar(r, 0.5 * PI + PI * k as f64 / (n - 1) as f64)).collect()
        };
        let axis = (0..n).map(|k| Complex::new(0.0, -4.0 + 8.0 * k as f64 / (n - 1) as f64)).collect();
        Ok([arc(b), axis, arc(2.0 * b)])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NeedleReport {
    pub params: NeedleParams,
    pub grid: NeedleGrid,
    pub degree: usize,
    pub height: f64,
    /// Smallest constant making each inequality hold on the grid.
    pub measured: BTreeMap<String, f64>,
    pub budget: f64,
    pub pass: BTreeMap<String, bool>,
    /// Largest `|G−F|` on the grid and the Simpson bound at the same point.
    pub max_g_minus_f: f64,
    pub max_gp_minus_fp: f64,
    pub simpson_bound_holds: bool,
    pub sum_poles: f64,
    pub sum_coeffs: f64,
}

impl NeedleReport {
    pub fn all_pass(&self) -> bool {
        self.pass.values().all(|&v| v) && self.simpson_bound_holds
    }
}

/// Measure the needle properties (a)–(f) on the grid. Property (f) is
/// evaluated in its scaled form: `δ = N^{−2(1−tε)}` and the target height
/// `(1−tε)·G(0)`.
pub fn verify_needle(
    f: &RationalMap,
    p: &NeedleParams,
    grid: &NeedleGrid,
    budget: f64,
) -> Result<NeedleReport, NeedleError> {
    p.validate()?;
    let b = p.b;
    let h = p.height();
    let regions = grid.regions(b)?;
    let mut a_a: f64 = 0.0;
    let mut b_re: f64 = 0.0;
    let mut b_der: f64 = 0.0;
    let mut a_c: f64 = 0.0;
    let mut re_max = f64::NEG_INFINITY;
    let mut max_err0: f64 = 0.0;
    let mut max_err1: f64 = 0.0;
    let mut bound_ok = true;
    for (ri, pts) in regions.iter().enumerate() {
        for &z in pts {
            let (v, d) = f.eval_with_deriv(z)?;
            if ri != 1 || z.norm() >= b {
                a_a = a_a.max((v.norm() + d.norm()) / b);
            }
            b_re = b_re.max(-v.re / (b * b));
            b_der = b_der.max(-d.re / b);
            a_c = a_c.max(v.im.abs() / b);
            re_max = re_max.max(v.re);
            let e0 = (eval_g(p, z)? - v).norm();
            let e1 = (eval_g_deriv(p, z)? - d).norm();
            let (bd0, bd1) = simpson_budget(p, z);
            // a few ulps of slack for the rounding in evaluating both sides
            let slack = 1e-13 * (1.0 + v.norm() + d.norm());
            if e0 > bd0 + slack || e1 > bd1 + slack {
                bound_ok = false;
            }
            max_err0 = max_err0.max(e0);
            max_err1 = max_err1.max(e1);
        }
    }
    let f0 = f.eval(Complex::new(0.0, 0.0))?;
    let a_d = ((f0 - h).norm().max(re_max - h)).max(0.0) / (b * b);
    let (sum_poles, sum_coeffs) =
        weights_of(f).iter().fold((0.0, 0.0), |(sp, sc), &(c, w)| (sp + w, sc + c));
    let a_e = (sum_poles + sum_coeffs) / b;

    let mut a_f: f64 = 0.0;
    let mut a_f_deriv: f64 = 0.0;
    let ln_n = (p.n as f64).ln();
    for t in [1.0, 2.0, 3.0] {
        let s = 1.0 - t * p.eps;
        let delta = (-2.0 * s * ln_n).exp();
        for k in 0..grid.gamma_samples {
            let gamma = 0.5 * PI + PI * (k as f64 + 0.5) / grid.gamma_samples as f64;
            let rot = Complex::from_polar(1.0, gamma);
            let (v, d) = f.eval_with_deriv(delta * rot)?;
            a_f = a_f.max((v.re - s * h).abs() / (b * b * h));
            a_f_deriv = a_f_deriv.max((2.0 * delta * d / (b * b) + rot.conj()).norm() / b);
        }
    }

    let mut measured = BTreeMap::new();
    measured.insert("a".to_string(), a_a);
    measured.insert("b".to_string(), b_re.max(b_der).max(0.0));
    measured.insert("c".to_string(), a_c);
    measured.insert("d".to_string(), a_d);
    measured.insert("e".to_string(), a_e);
    measured.insert("scaled-(f)".to_string(), a_f);
    measured.insert("scaled-(f) derivative".to_string(), a_f_deriv);
    let pass = measured.iter().map(|(k, &v)| (k.clone(), v.is_finite() && v <= budget)).collect();
    Ok(NeedleReport {
        params: *p,
        grid: *grid,
        degree: f.degree(),
        height: h,
        measured,
        budget,
        pass,
        max_g_minus_f: max_err0,
        max_gp_minus_fp: max_err1,
        simpson_bound_holds: bound_ok,
        sum_poles,
        sum_coeffs,
    })
}

/// Largest `|G−F|` over the verification grid.
pub fn max_grid_error(p: &NeedleParams, grid: &NeedleGrid) -> Result<f64, NeedleError> {
    let f = build_needle(p)?;
    let mut m: f64 = 0.0;
    for pts in grid.regions(p.b)? {
        for z in pts {
            m = m.max((eval_g(p, z)? - f.eval(z)?).norm());
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(b: f64, n: usize) -> NeedleParams {
        NeedleParams::new(b, n, 0.05).unwrap()
    }

    #[test]
    fn g_examples() {
        let p = params(0.5, 10);
        let g0 = eval_g(&p, Complex::new(0.0, 0.0)).unwrap();
        assert!((g0.re - 0.25 * 10f64.ln()).abs() < 1e-15);
        assert!((g0.re - 0.575646).abs() < 1e-6);
        let g1 = eval_g(&p, Complex::new(-1.0, 0.0)).unwrap();
        assert!((g1.re - 0.125 * (1.5f64 / 1.005).ln()).abs() < 1e-15);
        assert!((g1.re - 0.0500597).abs() < 1e-6);
        assert_eq!(g1.im, 0.0);
        assert!(matches!(eval_g(&p, Complex::new(0.3, 0.0)), Err(NeedleError::BranchCut { .. })));
    }

    #[test]
    fn simpson_examples() {
        let v = simpson_segment([0.0, 1.0 / 16.0, 1.0], 0.0, 1.0);
        assert!((v - 0.2083333333333333).abs() < 1e-15);
        assert!(((v - 0.2).abs() - simpson_error_bound(0.0, 1.0, 24.0)).abs() < 1e-15);
        assert_eq!(simpson_segment([3.0; 3], 1.0, 2.5), 4.5);
        assert_eq!(simpson_error_bound(1.0, 2.5, 0.0), 0.0);
        assert!((simpson_segment([0.0, 1.0, 8.0], 0.0, 2.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn two_node_needle() {
        let f = build_needle(&params(0.5, 2)).unwrap();
        let w = weights_of(&f);
        assert_eq!(w.len(), 3);
        let unit = (0.25 / 12.0) * 0.375;
        assert_eq!(unit, 0.0078125);
        let expect = [(unit, 0.5), (4.0 * unit, 0.3125), (unit, 0.125)];
        for ((c, p), (ce, pe)) in w.iter().zip(expect) {
            assert!((c - ce).abs() < 1e-17 && (p - pe).abs() < 1e-17);
        }
        let total: f64 = w.iter().map(|x| x.0).sum();
        assert!((total - 3.0 * 0.125 / 8.0).abs() < 1e-16);
    }

    #[test]
    fn merged_nodes_count() {
        let f = build_needle(&params(0.3, 32)).unwrap();
        assert_eq!(f.terms.len(), 2 * 31 + 1);
        assert_eq!(f.normalize().terms.len(), f.terms.len());
        for (c, w) in weights_of(&f) {
            assert!(c > 0.0 && w > 0.0 && w <= 0.3);
        }
    }

    #[test]
    fn error_within_budget_at_minus_b() {
        let p = params(0.5, 64);
        let f = build_needle(&p).unwrap();
        let z = Complex::new(-0.5, 0.0);
        let err = (eval_g(&p, z).unwrap() - f.eval(z).unwrap()).norm();
        assert!(err <= simpson_budget(&p, z).0);
    }

    #[test]
    fn report_is_finite() {
        let p = params(0.5, 32);
        let f = build_needle(&p).unwrap();
        let r = verify_needle(&f, &p, &NeedleGrid::default(), 10.0).unwrap();
        assert!(r.measured.values().all(|v| v.is_finite() && *v >= 0.0));
        assert!(r.simpson_bound_holds);
        assert!(matches!(
            verify_needle(&f, &p, &NeedleGrid::with_points(32), 10.0),
            Err(NeedleError::GridTooCoarse(32))
        ));
    }

    proptest! {
        #[test]
        fn reflection_symmetry(b in 0.05f64..0.9, n in 2usize..60, x in -3.0f64..0.0, y in -3.0f64..3.0) {
            let f = build_needle(&params(b, n)).unwrap();
            let z = Complex::new(x, y);
            let v = f.eval(z).unwrap();
            let w = f.eval(z.conj()).unwrap();
            prop_assert!((v.conj() - w).norm() <= 1e-14 * (1.0 + v.norm()));
            prop_assert_eq!(f.eval(Complex::new(x - 1e-3, 0.0)).unwrap().im, 0.0);
        }

        #[test]
        fn simpson_exact_on_cubics(c in prop::array::uniform4(-5.0f64..5.0), lo in -2.0f64..2.0, len in 0.01f64..3.0) {
            let hi = lo + len;
            let poly = |x: f64| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
            let prim = |x: f64| c[0] * x + c[1] * x * x / 2.0 + c[2] * x.powi(3) / 3.0 + c[3] * x.powi(4) / 4.0;
            let s = simpson_segment([poly(lo), poly(0.5 * (lo + hi)), poly(hi)], lo, hi);
            prop_assert!((s - (prim(hi) - prim(lo))).abs() <= 1e-12 * (1.0 + s.abs()));
        }

        #[test]
        fn deriv_matches_differences(b in 0.05f64..0.9, n in 2usize..64, x in -2.0f64..-0.1, y in -2.0f64..2.0) {
            let f = build_needle(&params(b, n)).unwrap();
            let z = Complex::new(x, y);
            let h = 1e-5;
            let fd = (f.eval(z + h).unwrap() - f.eval(z - h).unwrap()) / (2.0 * h);
            prop_assert!((f.deriv(z).unwrap() - fd).norm() <= 1e-6);
        }
    }
}
