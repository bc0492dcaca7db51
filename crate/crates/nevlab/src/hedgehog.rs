//! Hedgehog induction: spines planted into the gaps of a fat Cantor set on
//! the circle, `φ_n(z) = z + Σ e^{iθ_j}F_{b_j}(ze^{−iθ_j})`, each step
//! checked for argument containment, sector containment, tip modulus,
//! winding and `Re φ′ ≥ 1/4`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{
    count_boxes, simple_curve_check_refined, winding_index, AnalysisError, CurveSample,
};
use crate::needle::{build_needle, weights_of, NeedleError, NeedleParams};
use crate::ratmap::{Complex, MapError, RationalMap};

pub const MAX_HALVINGS: usize = 40;
const TAU: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HedgehogError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("arc widths exhaust the circle: Σ2γ = {total}")]
    MeasureExhausted { total: f64 },
    #[error("needle property violated: {property} (measured {value})")]
    PropertyFail { property: String, value: f64 },
    #[error("argument of the boundary image turns {turns} times instead of once")]
    WindingFailure { turns: f64 },
    #[error("no admissible b for arc {arc} after {halvings} halvings; at the starting b: {first}; last failure: {property}")]
    ShrinkExhausted { arc: usize, halvings: usize, first: String, property: String },
    #[error(transparent)]
    Needle(#[from] NeedleError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

// ------------------------------------------------------------------ cantor

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Arc {
    pub center: f64,
    pub half_width: f64,
}

fn ang_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

impl Arc {
    /// `I*`: the concentric arc of half the width.
    pub fn inner_contains(&self, angle: f64) -> bool {
        ang_dist(angle, self.center) < 0.5 * self.half_width
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CantorArcs {
    pub c: f64,
    pub arcs: Vec<Arc>,
    pub complement_measure: f64,
}

pub fn gamma_n(c: f64, n: usize) -> f64 {
    let n = n as f64;
    c / (n * (n + 1.0).ln().powi(2))
}

/// `count` arcs of half-widths `γ_n = c/(n log²(n+1))`: the first centred at
/// angle 0, each later one in the middle of the currently longest gap.
pub fn make_cantor(c: f64, count: usize) -> Result<CantorArcs, HedgehogError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(HedgehogError::InvalidConfig(format!("c = {c}")));
    }
    let total: f64 = (1..=count).map(|n| 2.0 * gamma_n(c, n)).sum();
    if total >= TAU {
        return Err(HedgehogError::MeasureExhausted { total });
    }
    let mut arcs = Vec::with_capacity(count);
    // gaps as (start, length), measured counter-clockwise
    let mut gaps: Vec<(f64, f64)> = Vec::new();
    for n in 1..=count {
        let g = gamma_n(c, n);
        if n == 1 {
            arcs.push(Arc { center: 0.0, half_width: g });
            gaps.push((g, TAU - 2.0 * g));
            continue;
        }
        let (k, &(start, len)) = gaps
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .1.total_cmp(&y.1 .1).then(y.1 .0.total_cmp(&x.1 .0)))
            .expect("at least one gap");
        if 2.0 * g >= len {
            return Err(HedgehogError::MeasureExhausted { total });
        }
        let mid = start + 0.5 * len;
        arcs.push(Arc { center: mid.rem_euclid(TAU), half_width: g });
        let half = 0.5 * len - g;
        gaps[k] = (start, half);
        gaps.insert(k + 1, (mid + g, half));
    }
    Ok(CantorArcs { c, arcs, complement_measure: TAU - total })
}

// ------------------------------------------------------------------- spine

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpineProps {
    /// max `(|F|+|F′|)/b` on the grid outside `D(1,√b)`.
    pub small_const: f64,
    /// min `Re F′` on the closed-disc grid.
    pub min_re_deriv: f64,
    /// max `|Im F|/b` on the grid inside `D(1,b)`.
    pub im_const: f64,
    pub deficit_const: f64,
    pub tip: f64,
    pub grid_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Spine {
    pub theta: f64,
    pub b: f64,
    pub nodes: usize,
    /// Height `F(0)` of the half-plane needle before normalisation.
    pub g0: f64,
    pub map: RationalMap,
    pub props: SpineProps,
}

fn logspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n).map(move |k| (l0 + (l1 - l0) * k as f64 / (n - 1).max(1) as f64).exp())
}

/// Polar grid of the closed disc, plus a log-polar patch around `e^{iθ}`
/// for each `(θ, b)` (radii down to a quarter of the pole gap `a`).
fn disc_grid(n: usize, bases: &[(f64, f64, f64)]) -> Vec<Complex> {
    let mut pts = vec![Complex::new(0.0, 0.0)];
    for k in 1..=n {
        let r = k as f64 / n as f64;
        for j in 0..n {
            pts.push(Complex::from_polar(r, TAU * j as f64 / n as f64));
        }
    }
    for &(theta, b, a) in bases {
        let rot = Complex::from_polar(1.0, theta);
        let m = 4 * n;
        for rho in logspace(0.25 * a, (4.0 * b.sqrt()).min(1.0), m) {
            for j in 0..=n / 2 {
                let psi = 0.5 * PI + PI * j as f64 / (n / 2) as f64;
                let z = 1.0 + Complex::from_polar(rho, psi);
                if z.norm() <= 1.0 {
                    pts.push(rot * z);
                }
            }
            // boundary points on both sides of the base
            let t = 2.0 * (0.5 * rho).min(1.0).asin();
            pts.push(Complex::from_polar(1.0, theta + t));
            pts.push(Complex::from_polar(1.0, theta - t));
        }
    }
    pts
}

/// The circle needle `z ↦ 3F(z−1)/G₀` rotated to `θ`, with its block
/// properties measured but not enforced.
pub fn spine_needle_unchecked(b: f64, nodes: usize, theta: f64) -> Result<Spine, HedgehogError> {
    if !(b > 0.0 && b <= 0.2) {
        return Err(HedgehogError::InvalidConfig(format!("b = {b} not in (0, 0.2]")));
    }
    let p = NeedleParams::new(b, nodes, 0.05)?;
    let f = build_needle(&p)?;
    let g0: f64 = weights_of(&f).iter().map(|&(c, w)| c / w).sum();
    let base = f.precompose_rotation_shift(0.0)?.scaled(Complex::new(3.0 / g0, 0.0));

    let pts = disc_grid(64, &[(0.0, b, p.a())]);
    let vals = pts
        .par_iter()
        .map(|&z| base.eval_with_deriv(z).map(|(v, d)| (z, v, d)))
        .collect::<Result<Vec<_>, _>>()?;
    let (sb, mut small, mut re_min, mut im) = (b.sqrt(), 0.0f64, f64::INFINITY, 0.0f64);
    for &(z, v, d) in &vals {
        let dist = (z - 1.0).norm();
        if dist >= sb {
            small = small.max(v.norm() + d.norm());
        }
        if dist < b {
            im = im.max(v.im.abs());
        }
        re_min = re_min.min(d.re);
    }
    let props = SpineProps {
        small_const: small / b,
        min_re_deriv: re_min,
        im_const: im / b,
        deficit_const: base.blaschke_deficit()? / b,
        tip: base.eval(Complex::new(1.0, 0.0))?.re,
        grid_points: pts.len(),
    };
    let rot = Complex::from_polar(1.0, theta);
    let map = f.precompose_rotation_shift(theta)?.scaled(rot * (3.0 / g0));
    Ok(Spine { theta, b, nodes, g0, map, props })
}

/// As [`spine_needle_unchecked`], refusing needles that break the hard
/// parts of the block contract (tip height 3, `Re F′ ≥ −1/2`).
pub fn spine_needle(b: f64, nodes: usize, theta: f64) -> Result<Spine, HedgehogError> {
    let s = spine_needle_unchecked(b, nodes, theta)?;
    if (s.props.tip - 3.0).abs() > 1e-9 {
        return Err(HedgehogError::PropertyFail { property: "F(1) = 3".into(), value: s.props.tip });
    }
    if s.props.min_re_deriv < -0.5 {
        return Err(HedgehogError::PropertyFail {
            property: "Re F' >= -1/2".into(),
            value: s.props.min_re_deriv,
        });
    }
    Ok(s)
}

// ------------------------------------------------------------------- theta

fn lifted_args(phi: &RationalMap, samples: usize) -> Result<Vec<f64>, HedgehogError> {
    let vals = (0..samples)
        .into_par_iter()
        .map(|k| phi.eval(Complex::from_polar(1.0, TAU * k as f64 / samples as f64)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(samples + 1);
    let mut acc = vals[0].arg();
    out.push(acc);
    for k in 1..=samples {
        acc += (vals[k % samples] / vals[k - 1]).arg();
        out.push(acc);
    }
    Ok(out)
}

/// Is `t ↦ arg φ(e^{it})` strictly increasing on an `n`-point grid?
pub fn arg_monotone(phi: &RationalMap, samples: usize) -> Result<bool, HedgehogError> {
    let l = lifted_args(phi, samples)?;
    Ok(l.windows(2).all(|w| w[1] > w[0]))
}

/// `θ` with `arg φ(e^{iθ}) = α`, by bisection on the lifted argument.
pub fn find_theta(phi: &RationalMap, alpha: f64) -> Result<f64, HedgehogError> {
    const SAMPLES: usize = 10_000;
    let l = lifted_args(phi, SAMPLES)?;
    let turns = (l[SAMPLES] - l[0]) / TAU;
    if (turns - 1.0).abs() > 0.1 {
        return Err(HedgehogError::WindingFailure { turns });
    }
    let target = l[0] + (alpha - l[0]).rem_euclid(TAU);
    let k = (0..SAMPLES).find(|&k| l[k] <= target && target < l[k + 1]).unwrap_or(SAMPLES - 1);
    let t_at = |k: usize| TAU * k as f64 / SAMPLES as f64;
    let (mut lo, mut hi) = (t_at(k), t_at(k + 1));
    let v0 = phi.eval(Complex::from_polar(1.0, lo))?;
    let g = |t: f64| -> Result<f64, HedgehogError> {
        Ok(l[k] + (phi.eval(Complex::from_polar(1.0, t))? / v0).arg() - target)
    };
    if g(lo)? == 0.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g(mid)?;
        if v.abs() < 1e-13 {
            return Ok(mid.rem_euclid(TAU));
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).rem_euclid(TAU))
}

// --------------------------------------------------------------- induction

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HedgehogConfig {
    pub c: f64,
    pub arcs: usize,
    /// Simpson intervals per needle.
    pub nodes: usize,
    pub disc_grid: usize,
    pub boundary_samples: usize,
}

impl Default for HedgehogConfig {
    fn default() -> Self {
        Self { c: 0.1, arcs: 16, nodes: 256, disc_grid: 64, boundary_samples: 1 << 13 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepChecks {
    pub arg_containment: bool,
    pub sector_containment: bool,
    pub min_tip_modulus: f64,
    pub winding: Option<i64>,
    pub min_re_deriv: f64,
    pub simple: bool,
    pub boundary_samples: usize,
    pub first_failure: Option<String>,
}

impl StepChecks {
    pub fn pass(&self) -> bool {
        self.first_failure.is_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Attempt {
    pub b: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub arc: usize,
    pub alpha: f64,
    pub theta: f64,
    pub attempts: Vec<Attempt>,
    pub accepted_b: Option<f64>,
    pub checks: Option<StepChecks>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlantedSpine {
    pub arc: usize,
    pub theta: f64,
    pub b: f64,
    pub g0: f64,
    pub props: SpineProps,
    /// Index range of this spine's terms in `phi`.
    pub terms: (usize, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct HedgehogState {
    pub spines: Vec<PlantedSpine>,
    pub phi: RationalMap,
    pub history: Vec<StepReport>,
}

impl Default for HedgehogState {
    fn default() -> Self {
        Self { spines: Vec::new(), phi: RationalMap::identity(), history: Vec::new() }
    }
}

pub fn boundary_curve(phi: &RationalMap, n0: usize) -> Result<CurveSample, AnalysisError> {
    CurveSample::adaptive(|t| Ok(phi.eval(Complex::from_polar(1.0, t))?), 0.0, TAU, n0, 0.01, 1 << 17, true)
}

/// `closure(D(e^{iθ}, b) ∩ 𝔻)`: 256 boundary points (the inner circular arc
/// and the piece of 𝕋, the latter clustered at the base) and 16 interior.
fn cap_samples(theta: f64, b: f64) -> Vec<Complex> {
    let rot = Complex::from_polar(1.0, theta);
    let mut pts = Vec::with_capacity(272);
    // inner arc: e^{iθ}(1 + b e^{iψ}) with |·| ≤ 1 ⇔ cos ψ ≤ −b/2
    let psi_max = (-0.5 * b).acos();
    for k in 0..128 {
        let psi = psi_max + (TAU - 2.0 * psi_max) * k as f64 / 127.0;
        let z = 1.0 + Complex::from_polar(b, psi);
        pts.push(rot * z / z.norm().max(1.0));
    }
    let t_max = 2.0 * (0.5 * b).asin();
    for k in 0..128 {
        let s = -1.0 + 2.0 * k as f64 / 127.0;
        let t = t_max * (6.0 * s).sinh() / 6f64.sinh();
        pts.push(Complex::from_polar(1.0, theta + t));
    }
    for i in 1..=4 {
        for j in 0..4 {
            let rho = b * i as f64 / 5.0;
            let psi = PI * (0.625 + 0.25 * j as f64);
            pts.push(rot * (1.0 + Complex::from_polar(rho, psi)));
        }
    }
    pts
}

fn fail(checks: &mut StepChecks, label: String) {
    if checks.first_failure.is_none() {
        checks.first_failure = Some(label);
    }
}

/// Conditions (b)–(e), `Re φ′ ≥ 1/4` and the simple-curve witness for a
/// candidate map with the given planted spines `(θ, b, a, arc)`.
pub fn check_state(
    phi: &RationalMap,
    planted: &[(f64, f64, f64, usize)],
    cantor: &CantorArcs,
    cfg: &HedgehogConfig,
) -> Result<StepChecks, HedgehogError> {
    let mut ch = StepChecks {
        arg_containment: true,
        sector_containment: true,
        min_tip_modulus: f64::INFINITY,
        winding: None,
        min_re_deriv: f64::INFINITY,
        simple: false,
        boundary_samples: 0,
        first_failure: None,
    };
    // (d)
    for &(theta, _, _, arc) in planted {
        let m = phi.eval(Complex::from_polar(1.0, theta))?.norm();
        ch.min_tip_modulus = ch.min_tip_modulus.min(m);
        if m <= 2.0 {
            fail(&mut ch, format!("(d) |phi(e^(i theta))| = {m:.4} <= 2 at arc {arc}"));
        }
    }
    // (b)
    for &(theta, b, _, arc) in planted {
        let inner = cantor.arcs[arc];
        for z in cap_samples(theta, b) {
            let v = phi.eval(z)?;
            if !inner.inner_contains(v.arg()) {
                ch.arg_containment = false;
                fail(&mut ch, format!("(b) arg phi = {:.6} outside I*_{arc} at z = {z}", v.arg()));
                break;
            }
        }
    }
    // Re φ′ on the disc grid
    let bases: Vec<(f64, f64, f64)> = planted.iter().map(|&(t, b, a, _)| (t, b, a)).collect();
    let grid = disc_grid(cfg.disc_grid, &bases);
    let worst = grid
        .par_iter()
        .map(|&z| phi.deriv(z).map(|d| (d.re, z)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .expect("non-empty grid");
    ch.min_re_deriv = worst.0;
    if worst.0 < 0.25 {
        fail(&mut ch, format!("Re phi' = {:.4} < 1/4 at z = {}", worst.0, worst.1));
    }
    // (c), (e) and simplicity on the boundary image
    let curve = boundary_curve(phi, cfg.boundary_samples)?;
    ch.boundary_samples = curve.points.len();
    let arcs: Vec<Arc> = planted.iter().map(|p| cantor.arcs[p.3]).collect();
    if let Some(p) = curve.points.iter().find(|p| {
        let r = p.norm();
        !((0.5 < r && r < 1.5) || (1.0 < r && r < 4.0 && arcs.iter().any(|a| a.inner_contains(p.arg()))))
    }) {
        ch.sector_containment = false;
        fail(&mut ch, format!("(c) boundary point {p} outside the allowed sectors"));
    }
    match winding_index(&curve, Complex::new(0.0, 0.0)) {
        Ok(w) => {
            ch.winding = Some(w);
            if w != 1 {
                fail(&mut ch, format!("(e) winding index {w}"));
            }
        }
        Err(e) => fail(&mut ch, format!("(e) winding undetermined: {e}")),
    }
    let rep = simple_curve_check_refined(|t| Ok(phi.eval(Complex::from_polar(1.0, t))?), &curve, TAU)?;
    ch.simple = rep.simple;
    if !rep.simple {
        fail(&mut ch, "(a) boundary image not simple".into());
    }
    Ok(ch)
}

/// Plant a spine for arc `j` with the shrink loop on `b`.
pub fn plant_spine(
    state: &HedgehogState,
    cantor: &CantorArcs,
    j: usize,
    cfg: &HedgehogConfig,
) -> Result<HedgehogState, (HedgehogError, StepReport)> {
    let alpha = cantor.arcs.get(j).map(|a| a.center).unwrap_or(f64::NAN);
    let mut report = StepReport { arc: j, alpha, theta: f64::NAN, attempts: Vec::new(), accepted_b: None, checks: None };
    if j >= cantor.arcs.len() || state.spines.iter().any(|s| s.arc == j) {
        return Err((HedgehogError::InvalidConfig(format!("arc {j} unavailable")), report));
    }
    let theta = match find_theta(&state.phi, alpha) {
        Ok(t) => t,
        Err(e) => return Err((e, report)),
    };
    report.theta = theta;
    let n = state.spines.len();
    let mut b = 0.1f64.min(0.5f64.powi(n as i32));
    // keep the sequence strictly decreasing and below 2^{-n}
    let cap = state.spines.last().map(|s| s.b).unwrap_or(f64::INFINITY).min(0.5f64.powi(n as i32));
    while b >= cap {
        b *= 0.5;
    }
    let mut planted: Vec<(f64, f64, f64, usize)> =
        state.spines.iter().map(|s| (s.theta, s.b, s.b / (cfg.nodes * cfg.nodes) as f64, s.arc)).collect();
    planted.push((theta, b, 0.0, j));
    let mut last = String::new();
    for _ in 0..=MAX_HALVINGS {
        let attempt = (|| -> Result<Option<(Spine, RationalMap, StepChecks)>, HedgehogError> {
            let spine = spine_needle(b, cfg.nodes, theta)?;
            let phi = state.phi.concat(&spine.map);
            *planted.last_mut().unwrap() = (theta, b, b / (cfg.nodes * cfg.nodes) as f64, j);
            let ch = check_state(&phi, &planted, cantor, cfg)?;
            Ok(ch.pass().then_some((spine, phi, ch.clone())).or_else(|| {
                last = ch.first_failure.clone().unwrap_or_default();
                None
            }))
        })();
        match attempt {
            Ok(Some((spine, phi, ch))) => {
                report.attempts.push(Attempt { b, failure: None });
                report.accepted_b = Some(b);
                report.checks = Some(ch);
                let start = state.phi.terms.len();
                let mut next = state.clone();
                next.spines.push(PlantedSpine {
                    arc: j,
                    theta,
                    b,
                    g0: spine.g0,
                    props: spine.props,
                    terms: (start, phi.terms.len()),
                });
                next.phi = phi;
                next.history.push(report);
                return Ok(next);
            }
            Ok(None) => {}
            Err(e) => last = e.to_string(),
        }
        report.attempts.push(Attempt { b, failure: Some(last.clone()) });
        b *= 0.5;
    }
    let first = report.attempts.first().and_then(|a| a.failure.clone()).unwrap_or_default();
    Err((HedgehogError::ShrinkExhausted { arc: j, halvings: MAX_HALVINGS, first, property: last }, report))
}

#[derive(Debug, Clone, Serialize)]
pub struct HedgehogRun {
    pub config: HedgehogConfig,
    pub cantor: CantorArcs,
    pub state: HedgehogState,
    /// The step that could not be completed, if any.
    pub failed_step: Option<StepReport>,
    pub error: Option<String>,
    pub deficit: f64,
    pub deficit_bound: f64,
    pub pass: bool,
}

/// Plant spines for arcs `0..cfg.arcs` in order, stopping at the first
/// failure.
pub fn run_hedgehog(cfg: &HedgehogConfig) -> Result<HedgehogRun, HedgehogError> {
    let cantor = make_cantor(cfg.c, cfg.arcs)?;
    let mut state = HedgehogState::default();
    let (mut failed_step, mut error) = (None, None);
    for j in 0..cfg.arcs {
        match plant_spine(&state, &cantor, j, cfg) {
            Ok(s) => state = s,
            Err((e, rep)) => {
                error = Some(e.to_string());
                failed_step = Some(rep);
                break;
            }
        }
    }
    let deficit = state.phi.blaschke_deficit()?;
    let deficit_bound = state.spines.iter().map(|s| s.props.deficit_const * s.b).sum();
    let pass = error.is_none() && state.history.iter().all(|h| h.checks.as_ref().is_some_and(|c| c.pass()));
    Ok(HedgehogRun { config: *cfg, cantor, state, failed_step, error, deficit, deficit_bound, pass })
}

// --------------------------------------------------------------- box count

#[derive(Debug, Clone, Serialize)]
pub struct AccessibleBoxCount {
    pub n_box: i32,
    pub m: usize,
    pub slope: f64,
    pub spines: usize,
    /// `card{n: γ_n > 2^{1−N}}` over the whole arc family.
    pub wide_arcs: usize,
    pub bound: f64,
    pub meets_bound: bool,
}

/// Boxes of side `2^{−N}` met by the spine images inside `S([1.5,2], I*_j)`.
/// Without spines the base curve near the unit circle is counted instead.
pub fn accessible_boxcount(
    state: &HedgehogState,
    cantor: &CantorArcs,
    n_box: i32,
) -> Result<AccessibleBoxCount, HedgehogError> {
    let side = 2f64.powi(-n_box);
    let mut pts: Vec<Complex> = Vec::new();
    let eval = |t: f64| -> Result<Complex, AnalysisError> { Ok(state.phi.eval(Complex::from_polar(1.0, t))?) };
    if state.spines.is_empty() {
        let c = CurveSample::adaptive(eval, 0.0, TAU, 4096, 0.25 * side, 1 << 18, true)?;
        pts.extend(c.points.into_iter().filter(|p| (0.5..1.5).contains(&p.norm())));
    } else {
        for s in &state.spines {
            let arc = cantor.arcs[s.arc];
            let w = 4.0 * s.b;
            let c = CurveSample::adaptive(eval, s.theta - w, s.theta + w, 4096, 0.25 * side, 1 << 18, false)?;
            pts.extend(
                c.points.into_iter().filter(|p| (1.5..=2.0).contains(&p.norm()) && arc.inner_contains(p.arg())),
            );
        }
    }
    let m = if pts.is_empty() { 0 } else { count_boxes(&pts, n_box, Complex::new(0.0, 0.0)) };
    let thresh = 2f64.powi(1 - n_box);
    let wide_arcs = cantor.arcs.iter().filter(|a| a.half_width > thresh).count();
    let bound = 2f64.powi(n_box - 1) * wide_arcs as f64;
    Ok(AccessibleBoxCount {
        n_box,
        m,
        slope: if m > 0 { (m as f64).log2() / n_box as f64 } else { f64::NEG_INFINITY },
        spines: state.spines.len(),
        wide_arcs,
        bound,
        meets_bound: m as f64 >= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantor_family() {
        let k = make_cantor(0.1, 0).unwrap();
        assert!(k.arcs.is_empty());
        assert_eq!(k.complement_measure, TAU);

        let k = make_cantor(0.1, 16).unwrap();
        let direct: f64 = (1..=16).map(|n| 1.0 / (n as f64 * ((n + 1) as f64).ln().powi(2))).sum();
        assert!((k.complement_measure - (TAU - 0.2 * direct)).abs() < 1e-12);
        // disjoint: sort endpoints on [0, 2π) after cutting at the first arc
        let mut iv: Vec<(f64, f64)> = k
            .arcs
            .iter()
            .skip(1)
            .map(|a| (a.center - a.half_width, a.center + a.half_width))
            .collect();
        iv.sort_by(|x, y| x.0.total_cmp(&y.0));
        assert!(iv[0].0 >= k.arcs[0].half_width);
        assert!(iv.last().unwrap().1 <= TAU - k.arcs[0].half_width);
        assert!(iv.windows(2).all(|w| w[0].1 < w[1].0));
        for (n, a) in k.arcs.iter().enumerate() {
            assert!(a.half_width >= gamma_n(0.1, n + 1) * (1.0 - 1e-15));
        }
        assert!(matches!(make_cantor(10.0, 16), Err(HedgehogError::MeasureExhausted { .. })));
    }

    #[test]
    fn spine_normalisation_and_rotation() {
        let s = spine_needle_unchecked(0.1, 64, 0.0).unwrap();
        assert!((s.props.tip - 3.0).abs() < 1e-9);
        let a = 0.1 / (64.0 * 64.0);
        let pmin = s.map.min_pole_modulus().unwrap();
        assert!((pmin - (1.0 + a)).abs() < 1e-15);
        let t = spine_needle_unchecked(0.1, 64, 0.7).unwrap();
        let rot = Complex::from_polar(1.0, 0.7);
        for k in 0..20 {
            let u = Complex::from_polar(0.9, 0.3 * k as f64);
            let lhs = t.map.eval(rot * u).unwrap();
            let rhs = rot * s.map.eval(u).unwrap();
            assert!((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()), "{lhs} {rhs}");
        }
        assert!((t.map.eval(rot).unwrap() - 3.0 * rot).norm() < 1e-9);
    }

    #[test]
    fn desk_scale_needle_breaks_derivative_bound() {
        // the normalised log needle has Re F′ ≈ −3/(2 b ln N) just beside its base
        for (b, n) in [(0.1, 64), (0.1, 1024), (0.05, 256)] {
            let s = spine_needle_unchecked(b, n, 0.0).unwrap();
            let model = -3.0 / (2.0 * b * (n as f64).ln());
            assert!(s.props.min_re_deriv < -0.5, "{b} {n}: {}", s.props.min_re_deriv);
            assert!((s.props.min_re_deriv / model - 1.0).abs() < 0.25, "{} vs {model}", s.props.min_re_deriv);
            assert!(matches!(spine_needle(b, n, 0.0), Err(HedgehogError::PropertyFail { .. })));
        }
    }

    #[test]
    fn theta_search() {
        let id = RationalMap::identity();
        assert!((find_theta(&id, PI / 3.0).unwrap() - PI / 3.0).abs() < 1e-12);
        let mut phi = RationalMap::identity();
        phi.push(Complex::new(0.001, 0.0), Complex::new(2.0, 0.0), 1).unwrap();
        let th = find_theta(&phi, 0.0).unwrap();
        let th = if th > PI { th - TAU } else { th };
        assert!(th.abs() < 1e-3);
        assert!(phi.eval(Complex::from_polar(1.0, th)).unwrap().arg().abs() < 1e-10);
        assert!(arg_monotone(&phi, 10_000).unwrap());

        let mut two = RationalMap::affine(Complex::new(0.0, 0.0), Complex::new(0.0, 0.0));
        two.push(Complex::new(1.0, 0.0), Complex::new(0.0, 0.0), 2).ok();
        // z ↦ 1/z² winds −2 times
        assert!(matches!(find_theta(&two, 0.0), Err(HedgehogError::WindingFailure { .. })));
    }

    #[test]
    fn identity_state_checks_and_boxcount() {
        let cantor = make_cantor(0.1, 4).unwrap();
        let cfg = HedgehogConfig { disc_grid: 32, boundary_samples: 1024, ..Default::default() };
        let ch = check_state(&RationalMap::identity(), &[], &cantor, &cfg).unwrap();
        assert!(ch.pass(), "{:?}", ch.first_failure);
        assert_eq!(ch.winding, Some(1));
        let bc = accessible_boxcount(&HedgehogState::default(), &cantor, 6).unwrap();
        // the unit circle meets roughly 8·2^6/… boxes: slope near 1
        assert!((bc.slope - 1.0).abs() < 0.5, "{}", bc.slope);
    }

    #[test]
    fn first_spine_shrinks_out() {
        let cantor = make_cantor(0.1, 2).unwrap();
        let cfg = HedgehogConfig { arcs: 2, nodes: 32, disc_grid: 16, boundary_samples: 512, ..Default::default() };
        let (err, rep) = plant_spine(&HedgehogState::default(), &cantor, 0, &cfg).unwrap_err();
        assert!(matches!(err, HedgehogError::ShrinkExhausted { .. }));
        assert_eq!(rep.attempts.len(), MAX_HALVINGS + 1);
        assert!(rep.theta.abs() < 1e-12 || (rep.theta - TAU).abs() < 1e-12);
        assert!(rep.attempts.windows(2).all(|w| w[1].b == 0.5 * w[0].b));
    }
}
