//! Ladder waypoints and the snake map `f(z) = p₀ + Σ a_j·z/(z + iy_j)`,
//! `y_j = Q^{j+1}`, whose image of the real line crawls along the waypoint
//! polygon through a chain of boxes hung off each chord.

mod pw;
mod scaling;

pub use pw::*;
pub use scaling::*;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{convex_hull, point_in_convex_polygon, AnalysisError, Containment};
use crate::ratmap::{Complex, MapError, RationalMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SnakeError {
    #[error("invalid snake configuration: {0}")]
    InvalidConfig(String),
    #[error("waypoint condition ({condition}) fails at index {index}: {detail}")]
    ConditionViolated { condition: char, index: usize, detail: String },
    #[error("no sign convention interpolates F0(-iQ^n) = 1 (best residual {residual:e})")]
    CalibrationFailed { residual: f64 },
    #[error("pole {pole} of f is not cancelled: |1 - F0| = {residual:e}")]
    CancellationFailed { pole: String, residual: f64 },
    #[error("guard disc around {center} does not enclose a zero-free region (winding {winding})")]
    GuardFailed { center: String, winding: i64 },
    #[error("beta calibration failed after {0} halvings")]
    BetaExhausted(usize),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

fn c(re: f64, im: f64) -> Complex {
    Complex::new(re, im)
}

// ------------------------------------------------------------------ config

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct SnakeConfig {
    pub t: f64,
    pub q: f64,
    pub eps: f64,
    pub rho: f64,
    pub r1: u64,
    /// T below the theoretical threshold of 100.
    pub desk: bool,
}

impl SnakeConfig {
    pub fn from_t(t: f64) -> Result<Self, SnakeError> {
        if !(t >= 16.0) || !t.is_finite() {
            return Err(SnakeError::InvalidConfig(format!("T = {t} must be at least 16")));
        }
        let r1 = (2.0 * t * t.ln()).floor() as u64 + 1;
        let cfg = Self { t, q: t.powf(1.0 / 12.0), eps: t.powf(-0.5), rho: 1.0 - 1.0 / t, r1, desk: t <= 100.0 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Ladder ratio set directly, `T = Q¹²`.
    pub fn from_q(q: f64) -> Result<Self, SnakeError> {
        if !(q > 1.0) || !q.is_finite() {
            return Err(SnakeError::InvalidConfig(format!("Q = {q} must exceed 1")));
        }
        let t = q.powi(12).max(16.0);
        Ok(Self { q, ..Self::from_t(t)? })
    }

    pub fn with_q(mut self, q: f64) -> Result<Self, SnakeError> {
        self.q = q;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), SnakeError> {
        if !(self.q > 1.0) {
            return Err(SnakeError::InvalidConfig(format!("Q = {} must exceed 1", self.q)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(SnakeError::InvalidConfig(format!("rho = {} outside (0,1)", self.rho)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(SnakeError::InvalidConfig(format!("eps = {} outside (0,1)", self.eps)));
        }
        Ok(())
    }
}

// --------------------------------------------------------------- waypoints

/// Slack in each of the four waypoint conditions (positive = satisfied).
/// (d) is measured as `min_n log(|a_n|·2^{n+1}·T²)`, chords counted from 1.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct ConditionMargins {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Waypoints {
    pub w: Vec<Complex>,
    pub a: Vec<Complex>,
    /// Pole heights, one per chord: `y[j] = Q^{j+1}`.
    pub y: Vec<f64>,
    pub q: f64,
    /// The ε the conditions were checked against.
    pub eps: f64,
    pub t: f64,
    pub margins: ConditionMargins,
}

impl Waypoints {
    pub fn from_points(w: Vec<Complex>, q: f64, eps: f64, t: f64) -> Result<Self, SnakeError> {
        if w.len() < 2 {
            return Err(SnakeError::InvalidConfig("need at least two waypoints".into()));
        }
        if !(q > 1.0) {
            return Err(SnakeError::InvalidConfig(format!("Q = {q} must exceed 1")));
        }
        let a: Vec<Complex> = w.windows(2).map(|p| p[1] - p[0]).collect();
        if let Some(i) = a.iter().position(|x| *x == c(0.0, 0.0)) {
            return Err(SnakeError::ConditionViolated { condition: 'd', index: i, detail: "zero chord".into() });
        }
        let y = (0..a.len()).map(|j| q.powi(j as i32 + 1)).collect();
        let margins = check_conditions(&w, &a, eps, t)?;
        Ok(Self { w, a, y, q, eps, t, margins })
    }

    pub fn chords(&self) -> usize {
        self.a.len()
    }

    pub fn chord_sum(&self) -> f64 {
        self.a.iter().map(|x| x.norm()).sum()
    }
}

fn check_conditions(w: &[Complex], a: &[Complex], eps: f64, t: f64) -> Result<ConditionMargins, SnakeError> {
    let mut m = ConditionMargins { a: f64::INFINITY, b: f64::INFINITY, c: f64::INFINITY, d: f64::INFINITY };
    for (n, p) in w.iter().enumerate() {
        let s = 1.0 - p.norm();
        if s <= 0.0 {
            return Err(SnakeError::ConditionViolated { condition: 'a', index: n, detail: format!("|w| = {}", p.norm()) });
        }
        m.a = m.a.min(s);
    }
    for n in 0..a.len().saturating_sub(1) {
        let ratio = a[n + 1].norm() / a[n].norm();
        let sb = eps - (ratio - 1.0).abs();
        if sb <= 0.0 {
            return Err(SnakeError::ConditionViolated { condition: 'b', index: n, detail: format!("ratio {ratio}") });
        }
        let turn = (a[n + 1] * a[n].conj()).arg().abs();
        let sc = eps - turn;
        if sc < 0.0 {
            return Err(SnakeError::ConditionViolated { condition: 'c', index: n, detail: format!("turn {turn}") });
        }
        m.b = m.b.min(sb);
        m.c = m.c.min(sc);
    }
    for (n, x) in a.iter().enumerate() {
        let sd = x.norm().ln() + (n + 1) as f64 * 2f64.ln() + 2.0 * t.ln();
        if sd < 0.0 {
            return Err(SnakeError::ConditionViolated { condition: 'd', index: n, detail: format!("|a| = {:e}", x.norm()) });
        }
        m.d = m.d.min(sd);
    }
    Ok(m)
}

/// Running maximum of `1/β(t) + |θ′(t)|` (θ the direction of γ′) sampled
/// on a fixed grid and extended lazily as larger arguments are requested.
struct DeltaFn<'a> {
    gamma: &'a dyn Fn(f64) -> Complex,
    beta: &'a dyn Fn(f64) -> f64,
    step: f64,
    reached: f64,
    value: f64,
}

impl<'a> DeltaFn<'a> {
    fn integrand(&self, t: f64) -> Result<f64, SnakeError> {
        let h = 1e-4;
        let (gm, g0, gp) = ((self.gamma)(t - h), (self.gamma)(t), (self.gamma)(t + h));
        let d1 = (gp - gm) / (2.0 * h);
        let d2 = (gp - 2.0 * g0 + gm) / (h * h);
        let curv = (d1.conj() * d2).im / d1.norm_sqr();
        let b = (self.beta)(t);
        if !(b > 0.0 && b < 1.0) {
            return Err(SnakeError::InvalidConfig(format!("strip width beta({t}) = {b} outside (0,1)")));
        }
        Ok(1.0 / b + curv.abs())
    }

    fn at(&mut self, x: f64) -> Result<f64, SnakeError> {
        while self.reached < x {
            let t = (self.reached + self.step).min(x);
            self.value = self.value.max(self.integrand(t)?);
            self.reached = t;
        }
        Ok(self.value)
    }
}

/// Waypoints `w_n = γ(b_n)` from the step recursion `b_n = b_{n−1} + ρ^{r_n}`,
/// where the exponent `r` advances whenever `δ(b_n + Tρ^r)·Tρ^r ≥ 1`.
pub fn waypoints_from_path(
    gamma: &dyn Fn(f64) -> Complex,
    beta: &dyn Fn(f64) -> f64,
    config: &SnakeConfig,
    count: usize,
) -> Result<Waypoints, SnakeError> {
    config.validate()?;
    let ln_rho = (-1.0 / config.t).ln_1p();
    let mut delta = DeltaFn { gamma, beta, step: 1e-3, reached: 0.0, value: 0.0 };
    delta.value = delta.integrand(0.0)?;
    let mut w = vec![gamma(0.0)];
    let mut b = 0.0;
    let mut r = config.r1;
    for _ in 1..count {
        b += (r as f64 * ln_rho).exp();
        w.push(gamma(b));
        let step = config.t * (r as f64 * ln_rho).exp();
        if delta.at(b + step)? * step >= 1.0 {
            r += 1;
        }
    }
    Waypoints::from_points(w, config.q, config.eps, config.t)
}

/// The spiral `w_n = (1 − n/2N)·exp(2πiβn/√N)`, `n = 1..N−1`. The returned
/// polygon starts at `w₁`; conditions (b)/(c) are checked against the
/// measured ε, which must stay below 1.
pub fn waypoints_radial(n: usize, beta: f64, q: f64) -> Result<Waypoints, SnakeError> {
    if n < 4 {
        return Err(SnakeError::InvalidConfig(format!("N = {n} must be at least 4")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(SnakeError::InvalidConfig(format!("beta = {beta} must be positive")));
    }
    let nf = n as f64;
    let w: Vec<Complex> = (1..n)
        .map(|k| {
            let kf = k as f64;
            Complex::from_polar(1.0 - kf / (2.0 * nf), 2.0 * PI * beta * kf / nf.sqrt())
        })
        .collect();
    let a: Vec<Complex> = w.windows(2).map(|p| p[1] - p[0]).collect();
    let mut eps: f64 = 0.0;
    for k in 0..a.len() - 1 {
        eps = eps.max((a[k + 1].norm() / a[k].norm() - 1.0).abs());
        eps = eps.max((a[k + 1] * a[k].conj()).arg().abs());
    }
    if eps >= 1.0 {
        let turn = (a[1] * a[0].conj()).arg().abs();
        return Err(SnakeError::ConditionViolated {
            condition: 'c',
            index: 0,
            detail: format!("beta = {beta} gives measured eps {eps:.3} (turn {turn:.3}) >= 1"),
        });
    }
    // Equality is allowed in (b)/(c) here since ε is measured, not prescribed.
    let eps_chk = eps * (1.0 + 1e-9) + 1e-300;
    Waypoints::from_points(w, q, eps_chk, eps_chk.powi(-2))
}

// -------------------------------------------------------------------- f

/// `f(z) = p₀ + Σ a_j·z/(z + iy_j)`, stored as `p_last + Σ (−i·a_j·y_j)/(z + iy_j)`.
pub fn build_f(wp: &Waypoints) -> Result<RationalMap, SnakeError> {
    let tip = *wp.w.last().expect("nonempty");
    let mut f = RationalMap::affine(tip, c(0.0, 0.0));
    for (a, &y) in wp.a.iter().zip(&wp.y) {
        f.push(c(0.0, -y) * a, c(0.0, -y), 1)?;
    }
    Ok(f)
}

// ------------------------------------------------------------------- boxes

/// Chord boxes for `j = −1..=K` (index `j+1` in the vectors). The virtual
/// chords `a_{−1} = a₀` and `a_K = a_{K−1}` extend the chain by one box at
/// either end. T-boxes are triangles at the vertex `p_{j+1}`; they are
/// empty when consecutive chords are parallel.
#[derive(Debug, Clone, Serialize)]
pub struct Boxes {
    pub qplus: Vec<Vec<Complex>>,
    pub qminus: Vec<Vec<Complex>>,
    pub tplus: Vec<Vec<Complex>>,
    pub tminus: Vec<Vec<Complex>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

impl Boxes {
    pub fn new(wp: &Waypoints) -> Self {
        let k = wp.a.len();
        let a_ext = |j: isize| -> Complex { wp.a[j.clamp(0, k as isize - 1) as usize] };
        let p_ext = |j: isize| -> Complex {
            if j < 0 {
                wp.w[0] - wp.a[0]
            } else if j as usize > k {
                wp.w[k] + wp.a[k - 1]
            } else {
                wp.w[j as usize]
            }
        };
        let mut out = Boxes { qplus: vec![], qminus: vec![], tplus: vec![], tminus: vec![] };
        for j in -1..=k as isize {
            let (p0, p1, a) = (p_ext(j), p_ext(j + 1), a_ext(j));
            let a1 = a_ext(j + 1);
            for (side, s) in [(Side::Plus, 1.0), (Side::Minus, -1.0)] {
                let off = c(0.0, 2.0 * s) * a;
                let off1 = c(0.0, 2.0 * s) * a1;
                let qb = convex_hull(&[p0, p1, p0 + off, p1 + off]);
                let tb = convex_hull(&[p1, p1 + off, p1 + off1]);
                match side {
                    Side::Plus => {
                        out.qplus.push(qb);
                        out.tplus.push(tb);
                    }
                    Side::Minus => {
                        out.qminus.push(qb);
                        out.tminus.push(tb);
                    }
                }
            }
        }
        out
    }

    fn slot(&self, j: isize) -> Option<usize> {
        let i = j + 1;
        (i >= 0 && (i as usize) < self.qplus.len()).then_some(i as usize)
    }

    pub fn q_box(&self, j: isize, side: Side) -> Option<&[Complex]> {
        let i = self.slot(j)?;
        Some(match side {
            Side::Plus => &self.qplus[i],
            Side::Minus => &self.qminus[i],
        })
    }

    pub fn t_box(&self, j: isize, side: Side) -> Option<&[Complex]> {
        let i = self.slot(j)?;
        Some(match side {
            Side::Plus => &self.tplus[i],
            Side::Minus => &self.tminus[i],
        })
    }

    /// Linear position of a box in the chain: `Q_j ↦ 2(j+1)`, `T_j ↦ 2(j+1)+1`.
    fn chain_index(j: isize, is_t: bool) -> isize {
        2 * (j + 1) + is_t as isize
    }

    /// Chain indices of boxes on `side` near chord `j` that contain `p`.
    fn containing(&self, p: Complex, j: isize, side: Side) -> Vec<isize> {
        let mut hits = vec![];
        for jj in j - 1..=j + 2 {
            if self.q_box(jj, side).is_some_and(|b| inside(p, b)) {
                hits.push(Self::chain_index(jj, false));
            }
            if self.t_box(jj, side).is_some_and(|b| inside(p, b)) {
                hits.push(Self::chain_index(jj, true));
            }
        }
        hits
    }
}

/// Closed-polygon membership; degenerate boxes contain nothing.
fn inside(p: Complex, poly: &[Complex]) -> bool {
    poly.len() >= 3 && matches!(point_in_convex_polygon(p, poly), Ok(Containment::Inside | Containment::Boundary))
}

// ------------------------------------------------------------ verification

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SnakeGrid {
    pub per_window: usize,
    pub semicircle: usize,
}

impl Default for SnakeGrid {
    fn default() -> Self {
        Self { per_window: 128, semicircle: 128 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoxFailure {
    pub check: String,
    pub z: [f64; 2],
    pub window: isize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoxReport {
    pub windows: usize,
    pub samples: usize,
    pub membership: bool,
    pub derivative: bool,
    pub semicircles: bool,
    pub cap: bool,
    pub progression_monotone: bool,
    /// Smallest `x·Re(ā f′(x))/|a|²` seen on the windows (and its mirror).
    pub min_derivative_margin: f64,
    /// Smallest sampled `x > 0` from which the origin-cap checks hold all
    /// the way up to `y₀`.
    pub cap_start: f64,
    pub first_failure: Option<BoxFailure>,
    pub pass: bool,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Box checks for a map of the real line through the chord boxes.
/// `deriv` is optional so the same sweep can vet `f·(1−F₀)`.
pub fn verify_boxes_with<V, D>(value: V, deriv: Option<D>, wp: &Waypoints, boxes: &Boxes, grid: &SnakeGrid) -> BoxReport
where
    V: Fn(Complex) -> Option<Complex> + Sync,
    D: Fn(Complex) -> Option<Complex> + Sync,
{
    let k = wp.a.len() as isize;
    let n = grid.per_window.max(2);
    let y = |j: isize| wp.q.powi(j as i32 + 1);
    let a_at = |j: isize| wp.a[j.clamp(0, k - 1) as usize];

    struct WinOut {
        fail: Option<BoxFailure>,
        membership: bool,
        derivative: bool,
        margin: f64,
        chain: Vec<Vec<isize>>,
    }

    // Windows [y_j, y_{j+1}] and their mirrors, j = 0..K−1.
    let window = |j: isize, sign: f64| -> WinOut {
        let side = if sign > 0.0 { Side::Minus } else { Side::Plus };
        let xs = log_grid(y(j), y(j + 1), n);
        let mut out = WinOut { fail: None, membership: true, derivative: true, margin: f64::INFINITY, chain: vec![] };
        let note = |out: &mut WinOut, what: &str, x: f64| {
            if out.fail.is_none() {
                out.fail = Some(BoxFailure { check: what.into(), z: [x, 0.0], window: j });
            }
        };
        for &xa in &xs {
            let x = sign * xa;
            let z = c(x, 0.0);
            let Some(fx) = value(z) else {
                out.membership = false;
                note(&mut out, "evaluation", x);
                continue;
            };
            let ok = [boxes.q_box(j, side), boxes.t_box(j, side), boxes.q_box(j + 1, side)]
                .into_iter()
                .flatten()
                .any(|b| inside(fx, b));
            if !ok {
                out.membership = false;
                note(&mut out, if sign > 0.0 { "membership" } else { "membership (negative axis)" }, x);
            }
            out.chain.push(boxes.containing(fx, j, side));
            if let Some(d) = &deriv {
                let Some(fp) = d(z) else { continue };
                let mut chords = vec![j];
                if j >= 1 {
                    chords.push(j - 1);
                }
                for jj in chords {
                    let a = a_at(jj);
                    let m = sign * (a.conj() * fp).re * xa / a.norm_sqr();
                    out.margin = out.margin.min(m);
                    if m <= 0.0 {
                        out.derivative = false;
                        note(&mut out, "derivative sign", x);
                    }
                }
            }
        }
        out
    };

    let jobs: Vec<(isize, f64)> = (0..k).flat_map(|j| [(j, 1.0), (j, -1.0)]).collect();
    let wins: Vec<WinOut> = jobs.par_iter().map(|&(j, s)| window(j, s)).collect();

    // Semicircles |z| = y_j in the closed upper half-plane.
    let semis: Vec<Option<BoxFailure>> = (0..k)
        .into_par_iter()
        .map(|j| {
            let m = grid.semicircle.max(2);
            for t in 0..m {
                let th = PI * t as f64 / (m - 1) as f64;
                let z = Complex::from_polar(y(j), th);
                let ok = value(z).is_some_and(|fz| {
                    [boxes.q_box(j, Side::Plus), boxes.q_box(j, Side::Minus)].into_iter().flatten().any(|b| inside(fz, b))
                });
                if !ok {
                    return Some(BoxFailure { check: "semicircle".into(), z: [z.re, z.im], window: j });
                }
            }
            None
        })
        .collect();

    // Origin cap: [0, y₀] lands near p₀ in the boxes of the virtual chord and
    // chord 0; the negative side may also touch the other side at p₀.
    let cap_ok = |x: f64| -> bool {
        let z = c(x, 0.0);
        let Some(fx) = value(z) else { return false };
        let minus = [boxes.q_box(-1, Side::Minus), boxes.t_box(-1, Side::Minus), boxes.q_box(0, Side::Minus)];
        let plus = [boxes.q_box(-1, Side::Plus), boxes.t_box(-1, Side::Plus), boxes.q_box(0, Side::Plus)];
        let member = if x >= 0.0 {
            minus.into_iter().flatten().any(|b| inside(fx, b))
        } else {
            plus.into_iter().chain(minus).flatten().any(|b| inside(fx, b))
        };
        let sign_ok = match &deriv {
            Some(d) if x != 0.0 => d(z).is_some_and(|fp| x.signum() * (a_at(0).conj() * fp).re > 0.0),
            _ => true,
        };
        member && sign_ok
    };
    let cap_grid = log_grid(1.0, y(0), n);
    let mut cap = true;
    let mut cap_fail = None;
    for &x in &cap_grid {
        for s in [1.0, -1.0] {
            if !cap_ok(s * x) {
                cap = false;
                cap_fail.get_or_insert(BoxFailure { check: "origin cap".into(), z: [s * x, 0.0], window: -1 });
            }
        }
    }
    // Walk down toward 0 to locate where the cap checks start to hold.
    let mut cap_start = 1.0;
    for &x in log_grid(1.0, 1e-6, 61).iter().skip(1) {
        if cap_ok(x) && cap_ok(-x) {
            cap_start = x;
        } else {
            break;
        }
    }

    // Box progression along increasing positive x.
    let mut current = isize::MIN;
    let mut progression = true;
    let mut prog_fail = None;
    for (wi, out) in wins.iter().enumerate().filter(|(i, _)| jobs[*i].1 > 0.0) {
        for (t, hits) in out.chain.iter().enumerate() {
            match hits.iter().copied().filter(|&h| h >= current).min() {
                Some(h) => current = h,
                None => {
                    if progression {
                        let j = jobs[wi].0;
                        let x = log_grid(y(j), y(j + 1), n)[t];
                        prog_fail = Some(BoxFailure { check: "box progression".into(), z: [x, 0.0], window: j });
                    }
                    progression = false;
                }
            }
        }
    }

    let membership = wins.iter().all(|w| w.membership);
    let derivative = deriv.is_none() || wins.iter().all(|w| w.derivative);
    let semicircles = semis.iter().all(|s| s.is_none());
    let first_failure = wins
        .iter()
        .find_map(|w| w.fail.clone())
        .or_else(|| semis.iter().flatten().next().cloned())
        .or(cap_fail)
        .or(prog_fail);
    let pass = membership && derivative && semicircles && cap && progression;
    BoxReport {
        windows: k as usize,
        samples: 2 * k as usize * n + k as usize * grid.semicircle + 2 * cap_grid.len(),
        membership,
        derivative,
        semicircles,
        cap,
        progression_monotone: progression,
        min_derivative_margin: wins.iter().map(|w| w.margin).fold(f64::INFINITY, f64::min),
        cap_start,
        first_failure,
        pass,
    }
}

pub fn verify_boxes(f: &RationalMap, wp: &Waypoints, boxes: &Boxes, grid: &SnakeGrid) -> BoxReport {
    verify_boxes_with(|z| f.eval(z).ok(), Some(|z| f.deriv(z).ok()), wp, boxes, grid)
}

// -------------------------------------------------------------- separation

#[derive(Debug, Clone, Serialize)]
pub struct SeparationReport {
    /// `min |f(x)−f(x′)|·(1+min(|x|,|x′|))²/|x−x′|` over sampled pairs.
    pub constant: f64,
    /// The constant written as `Q^{−power}`.
    pub q_power: f64,
    pub worst_pair: [f64; 2],
    pub windows: usize,
    pub pairs: usize,
}

/// Pairwise separation on the windows `[y_j, y_{j+2}]`, their mirrors and
/// the central window `[−y₁, y₁]`.
pub fn injectivity_separation(f: &RationalMap, wp: &Waypoints, samples: usize) -> Result<SeparationReport, SnakeError> {
    let k = wp.a.len() as i32;
    let q = wp.q;
    let mut sets: Vec<Vec<f64>> = vec![];
    let top = (k - 1).max(0);
    for j in 0..top.max(1) {
        let hi = (j + 2).min(k);
        let xs = log_grid(q.powi(j + 1), q.powi(hi + 1), samples);
        sets.push(xs.iter().map(|x| -x).collect());
        sets.push(xs);
    }
    let y1 = q.powi(2);
    sets.push((0..samples).map(|t| -y1 + 2.0 * y1 * t as f64 / (samples - 1) as f64).collect());

    let per: Vec<(f64, [f64; 2], usize)> = sets
        .par_iter()
        .map(|xs| -> Result<(f64, [f64; 2], usize), SnakeError> {
            let vals = xs.iter().map(|&x| f.eval(c(x, 0.0))).collect::<Result<Vec<_>, _>>()?;
            let mut best = (f64::INFINITY, [0.0, 0.0], 0usize);
            for i in 0..xs.len() {
                for l in i + 1..xs.len() {
                    let dx = (xs[i] - xs[l]).abs();
                    if dx == 0.0 {
                        continue;
                    }
                    let s = 1.0 + xs[i].abs().min(xs[l].abs());
                    let v = (vals[i] - vals[l]).norm() / dx * s * s;
                    best.2 += 1;
                    if v < best.0 {
                        best.0 = v;
                        best.1 = [xs[i], xs[l]];
                    }
                }
            }
            Ok(best)
        })
        .collect::<Result<_, _>>()?;
    let (constant, worst_pair) = per.iter().fold((f64::INFINITY, [0.0, 0.0]), |acc, p| if p.0 < acc.0 { (p.0, p.1) } else { acc });
    Ok(SeparationReport {
        constant,
        q_power: -constant.ln() / q.ln(),
        worst_pair,
        windows: sets.len(),
        pairs: per.iter().map(|p| p.2).sum(),
    })
}

// -------------------------------------------------------------- real curve

/// Sample abscissae for the image of ℝ: log-spaced per ladder window on
/// both sides, a linear stretch through 0. The curve closes at infinity.
pub fn real_line_samples(wp: &Waypoints, per_window: usize) -> Vec<f64> {
    let q = wp.q;
    let k = wp.a.len() as i32;
    let x0 = q.powi(-2);
    let mut pos = vec![];
    for j in -2..k + 4 {
        let g = log_grid(q.powi(j), q.powi(j + 1), per_window + 1);
        pos.extend_from_slice(&g[..per_window]);
    }
    let mut xs: Vec<f64> = pos.iter().rev().map(|x| -x).collect();
    let lin = per_window.max(8);
    for t in 1..lin {
        xs.push(-x0 + 2.0 * x0 * t as f64 / lin as f64);
    }
    xs.extend(pos);
    xs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{simple_curve_check, CurveSample};

    #[test]
    fn config_arithmetic() {
        let cfg = SnakeConfig::from_t(100.0).unwrap();
        assert_eq!(cfg.r1, 922);
        assert!((cfg.eps - 0.1).abs() < 1e-15);
        assert!((cfg.rho - 0.99).abs() < 1e-15);
        assert!((cfg.q - 100f64.powf(1.0 / 12.0)).abs() < 1e-15);
        assert!(cfg.desk);
        assert!(SnakeConfig::from_t(10.0).is_err());
        assert_eq!(SnakeConfig::from_q(4.0).unwrap().q, 4.0);
    }

    #[test]
    fn straight_path_recursion() {
        let cfg = SnakeConfig::from_t(16.0).unwrap();
        let v = Complex::from_polar(1.0, 0.3);
        let gamma = move |t: f64| v * t;
        let beta = |_t: f64| 0.5;
        let wp = waypoints_from_path(&gamma, &beta, &cfg, 60).unwrap();
        assert_eq!(wp.w[0], c(0.0, 0.0));
        for p in wp.a.windows(2) {
            let r = p[1].norm() / p[0].norm();
            assert!((r - 1.0).abs() < 1e-9 || (r - cfg.rho).abs() < 1e-9, "{r}");
            assert!((p[1] / p[0]).arg().abs() < 1e-9);
        }
        // first step is ρ^{r₁}
        let first = (cfg.r1 as f64 * cfg.rho.ln()).exp();
        assert!((wp.a[0].norm() - first).abs() < 1e-12);
    }

    #[test]
    fn curved_path_advances_exponent() {
        let cfg = SnakeConfig::from_t(16.0).unwrap();
        // circle of radius 0.3: curvature 1/0.3 on top of 1/β
        let gamma = |t: f64| c(0.0, 0.3) + 0.3 * Complex::from_polar(1.0, t / 0.3 - PI / 2.0);
        let beta = |_t: f64| 0.5;
        let wp = waypoints_from_path(&gamma, &beta, &cfg, 400).unwrap();
        let first = wp.a[0].norm();
        let last = wp.a.last().unwrap().norm();
        assert!(last < first);
        assert!(wp.margins.c >= 0.0);
    }

    #[test]
    fn radial_examples() {
        let wp = waypoints_radial(64, 0.5, 4.0).unwrap();
        assert_eq!(wp.w.len(), 63);
        assert!((wp.w[31].norm() - 0.75).abs() < 1e-15); // n = N/2
        let inc = 2.0 * PI * 0.5 / 8.0;
        for p in wp.w.windows(2) {
            assert!(((p[1] / p[0]).arg() - inc).abs() < 1e-12);
        }
        assert!(waypoints_radial(64, 5.0, 4.0).is_err());
        assert!(waypoints_radial(3, 0.5, 4.0).is_err());
    }

    #[test]
    fn f_basics() {
        let wp = Waypoints::from_points(vec![c(0.0, 0.0), c(0.5, 0.0)], 2.0, 0.5, 16.0).unwrap();
        let f = build_f(&wp).unwrap();
        assert!(f.eval(c(0.0, 0.0)).unwrap().norm() < 1e-15);
        // single chord a = 0.5, y = 2: f(x) = 0.5x/(x+2i)
        let x = c(3.0, 0.0);
        assert!((f.eval(x).unwrap() - 0.5 * x / (x + c(0.0, 2.0))).norm() < 1e-15);
        assert!((f.eval(c(1e9, 0.0)).unwrap() - c(0.5, 0.0)).norm() < 1e-8);

        let wp = waypoints_radial(32, 0.5, 4.0).unwrap();
        let f = build_f(&wp).unwrap();
        assert!((f.eval(c(0.0, 0.0)).unwrap() - wp.w[0]).norm() < 1e-14);
        for t in &f.terms {
            assert_eq!(t.pole.re, 0.0);
            assert!(t.pole.im < 0.0);
        }
        let z = c(7.0, 2.0);
        let h: Complex = wp.a.iter().zip(&wp.y).map(|(a, &y)| a * c(0.0, y) / ((z + c(0.0, y)) * (z + c(0.0, y)))).sum();
        assert!((f.deriv(z).unwrap() - h).norm() < 1e-10);
        // telescoping to the tip: the remainder is Σ a_j·iy_j/(x+iy_j)
        let far = 1e6 * wp.y.last().unwrap();
        let bound: f64 = wp.a.iter().zip(&wp.y).map(|(a, y)| a.norm() * y / far).sum();
        let err = (f.eval(c(far, 0.0)).unwrap() - wp.w.last().unwrap()).norm();
        assert!(err <= 1.001 * bound, "{err} {bound}");
        let far = 1e8 * wp.y.last().unwrap();
        assert!((f.eval(c(far, 0.0)).unwrap() - wp.w.last().unwrap()).norm() < 1e-8);
    }

    #[test]
    fn conjugate_symmetry_for_real_chords() {
        let w = vec![c(0.0, 0.0), c(0.1, 0.0), c(0.3, 0.0), c(0.35, 0.0)];
        let wp = Waypoints { a: vec![c(0.1, 0.0), c(0.2, 0.0), c(0.05, 0.0)], y: vec![3.0, 9.0, 27.0], q: 3.0, eps: 1.0, t: 16.0, w, margins: ConditionMargins { a: 0.0, b: 0.0, c: 0.0, d: 0.0 } };
        let f = build_f(&wp).unwrap();
        // poles on the imaginary axis: the reflection is z ↦ −z̄
        let z = c(1.3, 0.7);
        assert!((f.eval(-z.conj()).unwrap() - f.eval(z).unwrap().conj()).norm() < 1e-14);
        assert!((f.eval(z.conj()).unwrap() - f.eval(z).unwrap().conj()).norm() > 1e-3);
    }

    #[test]
    fn boxes_match_hulls() {
        let wp = waypoints_radial(32, 0.5, 4.0).unwrap();
        let b = Boxes::new(&wp);
        let q0 = b.q_box(0, Side::Minus).unwrap();
        assert_eq!(q0.len(), 4);
        for v in [wp.w[0], wp.w[1], wp.w[0] - c(0.0, 2.0) * wp.a[0], wp.w[1] - c(0.0, 2.0) * wp.a[0]] {
            assert!(q0.iter().any(|p| (p - v).norm() < 1e-15));
        }
        assert_eq!(b.t_box(0, Side::Plus).unwrap().len(), 3);
        assert!(inside(wp.w[0], b.q_box(0, Side::Plus).unwrap()));
        assert!(inside(wp.w[0], q0));
    }

    #[test]
    fn box_checks_radial_64() {
        let wp = waypoints_radial(64, 0.5, 4.0).unwrap();
        let f = build_f(&wp).unwrap();
        let boxes = Boxes::new(&wp);
        // geometric midpoint of window n = 2
        let x = wp.y[2] * 2.0;
        let fx = f.eval(c(x, 0.0)).unwrap();
        let hit = [boxes.q_box(2, Side::Minus), boxes.t_box(2, Side::Minus), boxes.q_box(3, Side::Minus)]
            .into_iter()
            .flatten()
            .any(|b| inside(fx, b));
        assert!(hit);
        assert!((wp.a[2].conj() * f.deriv(c(x, 0.0)).unwrap()).re > 0.0);
        let rep = verify_boxes(&f, &wp, &boxes, &SnakeGrid::default());
        assert!(rep.pass, "{rep:?}");
        let sep = injectivity_separation(&f, &wp, 64).unwrap();
        assert!(sep.constant > 0.0 && sep.constant.is_finite());
    }

    #[test]
    fn single_term_separation_closed_form() {
        let a = c(0.3, 0.1);
        let q = 2.0;
        let wp = Waypoints::from_points(vec![c(0.0, 0.0), a], q, 0.5, 16.0).unwrap();
        let f = build_f(&wp).unwrap();
        let rep = injectivity_separation(&f, &wp, 32).unwrap();
        // |f(x)−f(x′)|/|x−x′| = |a|y/(|x+iy||x′+iy|) for f = a·x/(x+iy)
        let y = q;
        let mut sets = vec![log_grid(q, q * q, 32)];
        sets.push(sets[0].iter().map(|x| -x).collect());
        let y1 = q * q;
        sets.push((0..32).map(|t| -y1 + 2.0 * y1 * t as f64 / 31.0).collect());
        let mut best = f64::INFINITY;
        for xs in &sets {
            for i in 0..xs.len() {
                for l in i + 1..xs.len() {
                    let s = 1.0 + xs[i].abs().min(xs[l].abs());
                    let v = a.norm() * y / (c(xs[i], y).norm() * c(xs[l], y).norm()) * s * s;
                    best = best.min(v);
                }
            }
        }
        assert!((rep.constant - best).abs() < 1e-12 * best, "{} vs {best}", rep.constant);
    }

    #[test]
    fn real_line_image_is_simple() {
        // β = 0.5 gives boxes wider than the spacing between spiral turns,
        // and the image of ℝ does cross itself
        let wp = waypoints_radial(32, 0.5, 4.0).unwrap();
        let f = build_f(&wp).unwrap();
        let xs = real_line_samples(&wp, 64);
        let pts: Vec<Complex> = xs.iter().map(|&x| f.eval(c(x, 0.0)).unwrap()).collect();
        assert!(!simple_curve_check(&CurveSample::new(pts, true, xs).unwrap()).simple);

        let (beta, _) = calibrate_beta(&[32], 0.5, 4.0, &SnakeGrid::default()).unwrap();
        assert!(beta < 0.5);
        let wp = waypoints_radial(32, beta, 4.0).unwrap();
        let f = build_f(&wp).unwrap();
        let xs = real_line_samples(&wp, 64);
        let pts: Vec<Complex> = xs.iter().map(|&x| f.eval(c(x, 0.0)).unwrap()).collect();
        let curve = CurveSample::new(pts, true, xs).unwrap();
        assert!(simple_curve_check(&curve).simple);
    }
}
