//! The entire corrector `F₀ = R·Σ κ_n·S/(1 ± iz/Qⁿ)` that interpolates 1 at
//! the ladder poles `−iQⁿ`, and the corrected map `F = f·(1 − F₀)`.
//!
//! Everything is evaluated as a complex logarithm: `R` and `S` reach
//! magnitudes like `exp(Qⁿ)` at the interpolation nodes. Each summand is
//! stored as a ratio anchored at its own node, so it equals 1 there exactly
//! and the huge normalising constants never appear.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SnakeError;
use crate::ratmap::{Complex, RationalMap};

fn c(re: f64, im: f64) -> Complex {
    Complex::new(re, im)
}

/// Factors closer to 1 than this are dropped.
const TRUNC: f64 = 1e-16;
const MAX_FACTORS: usize = 4096;

/// `log(1+u)`: series for tiny `u`, Kahan's correction for small `u`.
fn log1p(u: Complex) -> Complex {
    let w = c(1.0, 0.0) + u;
    if u.norm() < 1e-5 {
        u * (1.0 - u * (0.5 - u * (1.0 / 3.0 - 0.25 * u)))
    } else if w == c(0.0, 0.0) {
        c(f64::NEG_INFINITY, 0.0)
    } else if u.norm() > 0.5 {
        w.ln()
    } else {
        w.ln() * (u / (w - 1.0))
    }
}

/// `log sin w`, stable for large `|Im w|`.
fn ln_sin(w: Complex) -> Complex {
    let i = c(0.0, 1.0);
    if w.im > 20.0 {
        -i * w + c(0.5f64.ln(), 0.5 * PI) + log1p(-(2.0 * i * w).exp())
    } else if w.im < -20.0 {
        i * w + c(0.5f64.ln(), -0.5 * PI) + log1p(-(-2.0 * i * w).exp())
    } else {
        w.sin().ln()
    }
}

fn sinc_half(d: Complex) -> Complex {
    if d.norm() < 1e-4 {
        0.5 - d * d / 48.0
    } else {
        (d / 2.0).sin() / d
    }
}

fn cx(p: [f64; 2]) -> Complex {
    c(p[0], p[1])
}

/// A value carried as `(log v, relative truncation bound)`; `v = 0` is
/// `log v` with real part −∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    pub ln: Complex,
    pub trunc: f64,
}

impl LogValue {
    fn zero() -> Self {
        Self { ln: c(f64::NEG_INFINITY, 0.0), trunc: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.ln.re == f64::NEG_INFINITY
    }

    pub fn value(&self) -> Complex {
        if self.is_zero() {
            c(0.0, 0.0)
        } else {
            self.ln.exp()
        }
    }

    pub fn ln_abs(&self) -> f64 {
        self.ln.re
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum CompositeMap {
    #[serde(rename = "rational")]
    Rational { map: RationalMap },
    /// `Π_{m≥1, m≠skip} (1 + sign·iz/Q^m)`, divided by its value at `anchor`.
    #[serde(rename = "product_S")]
    ProductS { q: f64, sign: i8, skip: Option<u32>, anchor: Option<[f64; 2]> },
    /// `e^{iπz/2}·sin(z/2)/Π_{k≥1}(1 − z²/(2πQ^k)²)`, divided by its value at `anchor`.
    #[serde(rename = "product_R")]
    ProductR { q: f64, anchor: Option<[f64; 2]> },
    #[serde(rename = "sum")]
    Sum { terms: Vec<CompositeMap> },
    #[serde(rename = "mul")]
    Mul { factors: Vec<CompositeMap> },
    #[serde(rename = "one_minus")]
    OneMinus { arg: Box<CompositeMap> },
}

impl CompositeMap {
    pub fn eval_log(&self, z: Complex) -> Result<LogValue, SnakeError> {
        match self {
            CompositeMap::Rational { map } => {
                let v = map.eval(z)?;
                Ok(if v == c(0.0, 0.0) { LogValue::zero() } else { LogValue { ln: v.ln(), trunc: 0.0 } })
            }
            CompositeMap::ProductS { q, sign, skip, anchor } => product_s(z, *q, *sign, *skip, anchor.map(cx)),
            CompositeMap::ProductR { q, anchor } => product_r(z, *q, anchor.map(cx)),
            CompositeMap::Sum { terms } => {
                let parts = terms.iter().map(|t| t.eval_log(z)).collect::<Result<Vec<_>, _>>()?;
                Ok(log_sum(&parts))
            }
            CompositeMap::Mul { factors } => {
                let mut acc = LogValue { ln: c(0.0, 0.0), trunc: 0.0 };
                for f in factors {
                    let v = f.eval_log(z)?;
                    if v.is_zero() {
                        return Ok(LogValue::zero());
                    }
                    acc.ln += v.ln;
                    acc.trunc += v.trunc;
                }
                Ok(acc)
            }
            CompositeMap::OneMinus { arg } => Ok(one_minus(arg.eval_log(z)?)),
        }
    }

    pub fn eval(&self, z: Complex) -> Result<Complex, SnakeError> {
        Ok(self.eval_log(z)?.value())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("composite map serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

fn log_sum(parts: &[LogValue]) -> LogValue {
    let live: Vec<&LogValue> = parts.iter().filter(|p| !p.is_zero()).collect();
    let Some(m) = live.iter().map(|p| p.ln.re).reduce(f64::max) else {
        return LogValue::zero();
    };
    if m == f64::INFINITY {
        return LogValue { ln: c(f64::INFINITY, 0.0), trunc: 0.0 };
    }
    let mut s = c(0.0, 0.0);
    let mut abs_err = 0.0;
    for p in &live {
        let t = (p.ln - m).exp();
        s += t;
        abs_err += t.norm() * p.trunc;
    }
    if s == c(0.0, 0.0) {
        return LogValue::zero();
    }
    LogValue { ln: m + s.ln(), trunc: abs_err / s.norm() }
}

fn one_minus(v: LogValue) -> LogValue {
    if v.is_zero() {
        return LogValue { ln: c(0.0, 0.0), trunc: 0.0 };
    }
    let mag = v.ln.re;
    let ln = if mag < -30.0 {
        log1p(-v.ln.exp())
    } else if mag > 30.0 {
        // log(−F₀) + log(1 − 1/F₀)
        v.ln + c(0.0, PI) + log1p(-(-v.ln).exp())
    } else {
        let w = c(1.0, 0.0) - v.ln.exp();
        if w == c(0.0, 0.0) {
            return LogValue::zero();
        }
        w.ln()
    };
    // relative error of 1 − F₀ from relative error t of F₀
    let trunc = v.trunc * (mag - ln.re).exp();
    LogValue { ln, trunc }
}

fn product_s(z: Complex, q: f64, sign: i8, skip: Option<u32>, anchor: Option<Complex>) -> Result<LogValue, SnakeError> {
    let si = c(0.0, sign as f64);
    let mut ln = c(0.0, 0.0);
    let mut qm = 1.0;
    let mut tail = 0.0;
    for m in 1..=MAX_FACTORS as u32 {
        qm *= q;
        let u = si * z / qm;
        let v = anchor.map(|a| si * a / qm);
        let size = u.norm().max(v.map_or(0.0, |v| v.norm()));
        if size < TRUNC && skip.is_none_or(|s| m > s) {
            // geometric tail of the remaining log-factors
            tail = 2.0 * size * q / (q - 1.0);
            break;
        }
        if Some(m) == skip {
            continue;
        }
        let term = match v {
            None => log1p(u),
            Some(v) => {
                let den = c(1.0, 0.0) + v;
                if den == c(0.0, 0.0) {
                    return Err(SnakeError::InvalidConfig("product_S anchored at one of its zeros".into()));
                }
                let r = (u - v) / den;
                if r.norm() > 0.5 {
                    log1p(u) - log1p(v)
                } else {
                    log1p(r)
                }
            }
        };
        if term.re == f64::NEG_INFINITY {
            return Ok(LogValue::zero());
        }
        ln += term;
    }
    Ok(LogValue { ln, trunc: tail })
}

/// `log sin(z/2)` with the zero at `±2πQ^k` divided out when `z` is within
/// 1 of it; returns the index `k` so the caller skips that product factor.
fn ln_sin_deflated(z: Complex, q: f64) -> (Complex, Option<u32>) {
    let r = z.re.abs();
    if r > 1.0 && z.im.abs() < 1.0 {
        let k = ((r / (2.0 * PI)).ln() / q.ln()).round();
        if k >= 1.0 {
            let ck = 2.0 * PI * q.powi(k as i32);
            let sgn = z.re.signum();
            let d = z - sgn * ck;
            if d.norm() < 1.0 {
                // sin(z/2)/(1 − z²/c²) = (−1)^{m+1}·(sin(d/2)/d)·c²/(z ± c), m = Q^k
                let odd = (q as u64) % 2 == 1;
                let parity = if odd { c(0.0, 0.0) } else { c(0.0, PI) }; // (−1)^{m+1}
                let v = sinc_half(d).ln() + 2.0 * ck.ln() - (z + sgn * ck).ln() + parity;
                return (v, Some(k as u32));
            }
        }
    }
    (ln_sin(z / 2.0), None)
}

fn product_r(z: Complex, q: f64, anchor: Option<Complex>) -> Result<LogValue, SnakeError> {
    let i = c(0.0, 1.0);
    let (lz, kz) = ln_sin_deflated(z, q);
    let mut ln;
    match anchor {
        None => ln = i * PI * z / 2.0 + lz,
        Some(a) => {
            let (la, ka) = ln_sin_deflated(a, q);
            if ka.is_some() {
                return Err(SnakeError::InvalidConfig("product_R anchored next to one of its poles".into()));
            }
            ln = i * PI * (z - a) / 2.0 + (lz - la);
        }
    }
    let mut qk = 1.0;
    let mut tail = 0.0;
    for k in 1..=MAX_FACTORS as u32 {
        qk *= q;
        let ck = 2.0 * PI * qk;
        let c2 = ck * ck;
        let uz = z * z / c2;
        let ua = anchor.map(|a| a * a / c2);
        let size = uz.norm().max(ua.map_or(0.0, |u| u.norm()));
        if size < TRUNC && kz.is_none_or(|kk| k > kk) {
            tail = 2.0 * size * q * q / (q * q - 1.0);
            break;
        }
        // the factor divided out by the deflated sine: restore the anchor's share
        let term = if Some(k) == kz {
            match ua {
                None => c(0.0, 0.0),
                Some(ua) => -log1p(-ua),
            }
        } else {
            match (anchor, ua) {
                (Some(a), Some(ua)) => {
                    let r = (a * a - z * z) / (c2 * (c(1.0, 0.0) - ua));
                    // near-cancelling ratio: the factors are far from 1, take logs separately
                    if r.norm() > 0.5 {
                        log1p(-uz) - log1p(-ua)
                    } else {
                        log1p(r)
                    }
                }
                _ => log1p(-uz),
            }
        };
        ln -= term;
    }
    if !ln.re.is_finite() && ln.re != f64::NEG_INFINITY {
        return Err(SnakeError::InvalidConfig(format!("product_R overflow at {z}")));
    }
    Ok(LogValue { ln, trunc: tail })
}

// ------------------------------------------------------------------ F₀

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `S = Π(1 + iz/Qⁿ)`, nodes `+iQⁿ`.
    Printed,
    /// `S = Π(1 − iz/Qⁿ)`, nodes `−iQⁿ`.
    Mirrored,
}

impl Convention {
    fn sign(self) -> i8 {
        match self {
            Convention::Printed => 1,
            Convention::Mirrored => -1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PwCorrector {
    pub q: f64,
    pub truncation: usize,
    pub convention: Convention,
    pub residual_printed: f64,
    pub residual_mirrored: f64,
    pub map: CompositeMap,
}

impl PwCorrector {
    pub fn eval(&self, z: Complex) -> Result<Complex, SnakeError> {
        self.map.eval(z)
    }

    pub fn eval_log(&self, z: Complex) -> Result<LogValue, SnakeError> {
        self.map.eval_log(z)
    }
}

fn interpolant(q: f64, m: usize, conv: Convention) -> CompositeMap {
    let s = conv.sign();
    let terms = (1..=m as u32)
        .map(|n| {
            // the zero of 1 + s·iz/Qⁿ
            let node = [0.0, s as f64 * q.powi(n as i32)];
            CompositeMap::Mul {
                factors: vec![
                    CompositeMap::ProductR { q, anchor: Some(node) },
                    CompositeMap::ProductS { q, sign: s, skip: Some(n), anchor: Some(node) },
                ],
            }
        })
        .collect();
    CompositeMap::Sum { terms }
}

fn interpolation_residual(map: &CompositeMap, q: f64, m: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 1..=m as i32 {
        let r = match map.eval(c(0.0, -q.powi(n))) {
            Ok(v) => (v - 1.0).norm(),
            Err(_) => f64::INFINITY,
        };
        worst = if r.is_nan() { f64::INFINITY } else { worst.max(r) };
    }
    worst
}

/// Build both sign conventions and keep the one with `F₀(−iQⁿ) = 1`.
/// Integer `Q` is required: the zeros of `sin(z/2)` must cover the poles
/// `±2πQ^k` of the product in `R`, otherwise `F₀` has poles on ℝ.
pub fn build_f0(q: f64, m: usize) -> Result<PwCorrector, SnakeError> {
    if !(q >= 2.0) || q.fract() != 0.0 || q > 1e6 {
        return Err(SnakeError::InvalidConfig(format!("Q = {q} must be an integer >= 2")));
    }
    if m < 10 {
        return Err(SnakeError::InvalidConfig(format!("truncation {m} must be at least 10")));
    }
    let printed = interpolant(q, m, Convention::Printed);
    let mirrored = interpolant(q, m, Convention::Mirrored);
    let rp = interpolation_residual(&printed, q, m);
    let rm = interpolation_residual(&mirrored, q, m);
    let (convention, map, best) = if rm <= rp { (Convention::Mirrored, mirrored, rm) } else { (Convention::Printed, printed, rp) };
    if !(best < 1e-6) {
        return Err(SnakeError::CalibrationFailed { residual: best });
    }
    Ok(PwCorrector { q, truncation: m, convention, residual_printed: rp, residual_mirrored: rm, map })
}

// ------------------------------------------------------------------- F

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Guard {
    pub center: [f64; 2],
    pub radius: f64,
}

/// `F = f·(1 − F₀)` with guard discs around the cancelled poles; inside a
/// guard the value comes from the Cauchy integral of `log F` on a circle of
/// twice the radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectedMap {
    pub map: CompositeMap,
    pub guards: Vec<Guard>,
}

const CAUCHY_NODES: usize = 32;

impl CorrectedMap {
    pub fn eval_log(&self, z: Complex) -> Result<LogValue, SnakeError> {
        for g in &self.guards {
            let ctr = cx(g.center);
            if (z - ctr).norm() < g.radius {
                return self.cauchy(z, ctr, 2.0 * g.radius);
            }
        }
        self.map.eval_log(z)
    }

    pub fn eval(&self, z: Complex) -> Result<Complex, SnakeError> {
        Ok(self.eval_log(z)?.value())
    }

    fn cauchy(&self, z: Complex, ctr: Complex, r: f64) -> Result<LogValue, SnakeError> {
        let n = CAUCHY_NODES;
        let mut logs = Vec::with_capacity(n + 1);
        let mut trunc: f64 = 0.0;
        for k in 0..=n {
            let zeta = ctr + Complex::from_polar(r, 2.0 * PI * k as f64 / n as f64);
            let v = self.map.eval_log(zeta)?;
            trunc = trunc.max(v.trunc);
            logs.push((zeta, v.ln));
        }
        // unwrap the argument along the circle
        for k in 1..=n {
            let prev = logs[k - 1].1.im;
            let mut cur = logs[k].1.im;
            while cur - prev > PI {
                cur -= 2.0 * PI;
            }
            while cur - prev < -PI {
                cur += 2.0 * PI;
            }
            logs[k].1.im = cur;
        }
        let winding = ((logs[n].1.im - logs[0].1.im) / (2.0 * PI)).round() as i64;
        if winding != 0 || !logs.iter().all(|(_, l)| l.re.is_finite()) {
            return Err(SnakeError::GuardFailed { center: format!("{ctr}"), winding });
        }
        let mut acc = c(0.0, 0.0);
        for (zeta, l) in &logs[..n] {
            acc += l * (zeta - ctr) / (zeta - z);
        }
        Ok(LogValue { ln: acc / n as f64, trunc })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("corrected map serializes")
    }
}

pub fn guard_radius(qn: f64) -> f64 {
    (1e-4 * qn).min(0.5)
}

/// Every pole of `f` must be a ladder pole `−iQⁿ`, `n ≤ M`, where `1 − F₀`
/// vanishes.
pub fn build_corrected(f: &RationalMap, f0: &PwCorrector) -> Result<CorrectedMap, SnakeError> {
    let q = f0.q;
    let mut guards = vec![];
    for t in &f.terms {
        let p = t.pole;
        let n = ((-p.im).ln() / q.ln()).round();
        let ladder = p.re == 0.0 && p.im < 0.0 && n >= 1.0 && (q.powi(n as i32) + p.im).abs() <= 1e-12 * (-p.im);
        if !ladder || t.order != 1 {
            return Err(SnakeError::CancellationFailed { pole: format!("{p}"), residual: f64::INFINITY });
        }
        let one_minus = (c(1.0, 0.0) - f0.eval(p)?).norm();
        if n as usize > f0.truncation || !(one_minus <= 1e-6) {
            return Err(SnakeError::CancellationFailed { pole: format!("{p}"), residual: one_minus.max(if n as usize > f0.truncation { 1.0 } else { 0.0 }) });
        }
        guards.push(Guard { center: [p.re, p.im], radius: guard_radius(-p.im) });
    }
    let map = CompositeMap::Mul {
        factors: vec![CompositeMap::Rational { map: f.clone() }, CompositeMap::OneMinus { arg: Box::new(f0.map.clone()) }],
    };
    Ok(CorrectedMap { map, guards })
}

// -------------------------------------------------------------- reports

#[derive(Debug, Clone, Serialize)]
pub struct PwReport {
    pub q: f64,
    pub truncation: usize,
    pub convention: Convention,
    pub residual_printed: f64,
    pub residual_mirrored: f64,
    /// `|F₀(−iQⁿ) − 1|` for n = 1..6.
    pub interpolation: Vec<f64>,
    pub sup_real: f64,
    pub sup_at: f64,
    /// `p` in `|F₀(x)| ~ C/(1+|x|)^p`, fitted on the binned envelope.
    pub decay_exponent: f64,
    /// `(|x|, log|S(x)| / ((log(2+|x|))²/(2 log Q)))`.
    pub s_growth: Vec<(f64, f64)>,
    pub doubling_change: f64,
    pub max_trunc_bound: f64,
    pub grid_points: usize,
}

pub fn real_grid(half_width: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| -half_width + 2.0 * half_width * k as f64 / (n - 1) as f64).collect()
}

/// Growth of the mirrored `S` along ℝ against the model `(log(2+|x|))²/(2 log Q)`.
pub fn s_growth_ratio(q: f64, x: f64) -> Result<f64, SnakeError> {
    let s = CompositeMap::ProductS { q, sign: -1, skip: None, anchor: None };
    let ls = s.eval_log(c(x, 0.0))?.ln.re;
    let model = (2.0 + x.abs()).ln().powi(2) / (2.0 * q.ln());
    Ok(ls / model)
}

pub fn pw_report(f0: &PwCorrector, grid_points: usize) -> Result<PwReport, SnakeError> {
    let q = f0.q;
    let interpolation = (1..=6)
        .map(|n| Ok((f0.eval(c(0.0, -q.powi(n)))? - 1.0).norm()))
        .collect::<Result<Vec<_>, SnakeError>>()?;
    let xs = real_grid(1e4, grid_points);
    let vals = xs.par_iter().map(|&x| f0.eval_log(c(x, 0.0))).collect::<Result<Vec<_>, _>>()?;
    let mut sup_real = 0.0;
    let mut sup_at = 0.0;
    let mut max_trunc: f64 = 0.0;
    for (x, v) in xs.iter().zip(&vals) {
        let a = v.value().norm();
        if a > sup_real {
            sup_real = a;
            sup_at = *x;
        }
        max_trunc = max_trunc.max(v.trunc);
    }
    let doubled = build_f0(q, 2 * f0.truncation)?;
    let dvals = xs.par_iter().map(|&x| doubled.eval(c(x, 0.0))).collect::<Result<Vec<_>, _>>()?;
    let doubling_change = vals.iter().zip(&dvals).map(|(a, b)| (a.value() - b).norm()).fold(0.0, f64::max);
    let decay_exponent = decay_exponent(f0)?;
    let s_growth = (3..=6)
        .map(|k| {
            let x = q.powi(k);
            Ok((x, s_growth_ratio(q, x)?))
        })
        .collect::<Result<Vec<_>, SnakeError>>()?;
    Ok(PwReport {
        q,
        truncation: f0.truncation,
        convention: f0.convention,
        residual_printed: f0.residual_printed,
        residual_mirrored: f0.residual_mirrored,
        interpolation,
        sup_real,
        sup_at,
        decay_exponent,
        s_growth,
        doubling_change,
        max_trunc_bound: max_trunc,
        grid_points,
    })
}

/// Fit `log max|F₀|` over log-spaced bins of `|x| ∈ [10, 10⁴]` against
/// `log(1+|x|)`; the sine factor makes the raw values oscillate to zero, so
/// only the per-bin envelope is regressed.
fn decay_exponent(f0: &PwCorrector) -> Result<f64, SnakeError> {
    let bins = 24;
    let (lo, hi) = (10f64.ln(), 1e4f64.ln());
    let rows = (0..bins)
        .into_par_iter()
        .map(|b| -> Result<(f64, f64), SnakeError> {
            let a = (lo + (hi - lo) * b as f64 / bins as f64).exp();
            let e = (lo + (hi - lo) * (b + 1) as f64 / bins as f64).exp();
            let mut best = f64::NEG_INFINITY;
            let n = 64;
            for t in 0..n {
                let x = a + (e - a) * (t as f64 + 0.5) / n as f64;
                for s in [1.0, -1.0] {
                    best = best.max(f0.eval_log(c(s * x, 0.0))?.ln_abs());
                }
            }
            Ok(((1.0 + (a * e).sqrt()).ln(), best))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(-crate::analysis::lsq_slope(&xs, &ys))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpikeEntry {
    pub pole: [f64; 2],
    pub inner_max_log: f64,
    pub ring_median_log: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpikeReport {
    pub entries: Vec<SpikeEntry>,
    pub pass: bool,
}

/// Compare `log|F|` at the cancelled pole and on a tiny ring around it with
/// the median over the circle of twice the guard radius.
pub fn spike_check(fc: &CorrectedMap) -> Result<SpikeReport, SnakeError> {
    let entries = fc
        .guards
        .par_iter()
        .map(|g| -> Result<SpikeEntry, SnakeError> {
            let ctr = cx(g.center);
            let mut inner = fc.eval_log(ctr)?.ln_abs();
            for k in 0..8 {
                let z = ctr + Complex::from_polar(g.radius / 100.0, 2.0 * PI * k as f64 / 8.0);
                inner = inner.max(fc.eval_log(z)?.ln_abs());
            }
            let mut ring = (0..32)
                .map(|k| Ok(fc.eval_log(ctr + Complex::from_polar(2.0 * g.radius, 2.0 * PI * (k as f64 + 0.5) / 32.0))?.ln_abs()))
                .collect::<Result<Vec<f64>, SnakeError>>()?;
            ring.sort_by(f64::total_cmp);
            let median = 0.5 * (ring[15] + ring[16]);
            Ok(SpikeEntry { pole: g.center, inner_max_log: inner, ring_median_log: median })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pass = entries.iter().all(|e| e.inner_max_log.is_finite() && e.inner_max_log <= e.ring_median_log + 10f64.ln());
    Ok(SpikeReport { entries, pass })
}

/// Largest `log|F|` on polar grids over the upper and lower half-discs of
/// radius `r`.
pub fn half_disc_max_log(fc: &CorrectedMap, r: f64, radial: usize, angular: usize) -> Result<(f64, f64), SnakeError> {
    let radii: Vec<f64> = (0..radial).map(|k| r * (1e-3f64).powf(1.0 - k as f64 / (radial - 1) as f64)).collect();
    let mut out = [f64::NEG_INFINITY; 2];
    for (slot, sgn) in [(0usize, 1.0), (1usize, -1.0)] {
        let vals = radii
            .par_iter()
            .map(|&rad| -> Result<f64, SnakeError> {
                let mut m = f64::NEG_INFINITY;
                for t in 0..angular {
                    let th = sgn * PI * (t as f64 + 0.5) / angular as f64;
                    m = m.max(fc.eval_log(Complex::from_polar(rad, th))?.ln_abs());
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>, _>>()?;
        out[slot] = vals.into_iter().fold(f64::NEG_INFINITY, f64::max);
    }
    Ok((out[0], out[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snake::{build_f, waypoints_radial};

    #[test]
    fn log_helpers() {
        for w in [c(0.3, 0.2), c(2.0, 25.0), c(-1.0, -30.0), c(5.0, 19.0)] {
            let direct = w.sin().ln();
            let d = ln_sin(w) - direct;
            let k = (d.im / (2.0 * PI)).round();
            assert!((d - c(0.0, 2.0 * PI * k)).norm() < 1e-12, "{w}");
        }
        let u = c(1e-12, -3e-13);
        assert!((log1p(u) - (u - u * u / 2.0)).norm() < 1e-25);
        assert_eq!(log1p(c(-1.0, 0.0)).re, f64::NEG_INFINITY);
    }

    #[test]
    fn r_deflation_is_continuous() {
        // across x = 2πQ the deflated form must agree with the direct one
        let q = 4.0;
        let ck = 2.0 * PI * q;
        let near = product_r(c(ck + 0.999, 0.0), q, None).unwrap().value();
        let far = product_r(c(ck + 1.001, 0.0), q, None).unwrap().value();
        assert!((near - far).norm() < 1e-2 * near.norm().max(1e-300), "{near} {far}");
        let at = product_r(c(ck, 0.0), q, None).unwrap().value();
        assert!(at.norm().is_finite() && at.norm() > 0.0);
    }

    #[test]
    fn interpolation_and_calibration() {
        let f0 = build_f0(4.0, 40).unwrap();
        assert_eq!(f0.convention, Convention::Mirrored);
        assert!(f0.residual_printed > 1e-3);
        for n in 1..=6 {
            let v = f0.eval(c(0.0, -4f64.powi(n))).unwrap();
            assert!((v - 1.0).norm() < 1e-6, "n={n}: {v}");
        }
        assert!(build_f0(2.5, 40).is_err());
        assert!(build_f0(4.0, 5).is_err());
    }

    #[test]
    fn real_axis_small_and_stable() {
        let f0 = build_f0(4.0, 40).unwrap();
        let f1 = build_f0(4.0, 80).unwrap();
        for x in real_grid(1e4, 201) {
            let a = f0.eval(c(x, 0.0)).unwrap();
            assert!(a.norm() <= 0.25, "{x}: {a}");
            assert!((a - f1.eval(c(x, 0.0)).unwrap()).norm() < 1e-10);
        }
    }

    #[test]
    fn s_growth_approaches_model() {
        let r = s_growth_ratio(4.0, 4f64.powi(12)).unwrap();
        assert!((r - 1.0).abs() < 0.15, "{r}");
        assert!(s_growth_ratio(4.0, 4f64.powi(6)).unwrap() > s_growth_ratio(4.0, 4f64.powi(3)).unwrap());
    }

    #[test]
    fn corrected_map_cancels_poles() {
        let wp = waypoints_radial(16, 0.5, 4.0).unwrap();
        let f = build_f(&wp).unwrap();
        let f0 = build_f0(4.0, 40).unwrap();
        let fc = build_corrected(&f, &f0).unwrap();
        let at0 = fc.eval(c(0.0, 0.0)).unwrap();
        assert!((at0 - f.eval(c(0.0, 0.0)).unwrap() * (1.0 - f0.eval(c(0.0, 0.0)).unwrap())).norm() < 1e-12);
        let spikes = spike_check(&fc).unwrap();
        assert!(spikes.pass, "{spikes:?}");
        let json = fc.to_json();
        let back: CorrectedMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back.map, fc.map);
    }

    #[test]
    fn uncancelled_pole_is_refused() {
        let wp = waypoints_radial(64, 0.5, 4.0).unwrap();
        let f = build_f(&wp).unwrap();
        let f0 = build_f0(4.0, 40).unwrap();
        assert!(matches!(build_corrected(&f, &f0), Err(SnakeError::CancellationFailed { .. })));
    }
}
